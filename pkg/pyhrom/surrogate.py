"""
Two-stage latent surrogate: a frozen autoencoder maps each trajectory to latent vectors, which are augmented with
the trajectory's control parameters, and an LSTM learns the one-step latent map from the last ``k`` vectors.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pyhrom.datasets.snapshots import CSV_FLOAT_FORMAT, SnapshotMatrix
from pyhrom.exceptions import HromConfigError, HromDomainError, HromFormatError, HromOptimizationError, \
    HromValidationError
from pyhrom.models.hybrid import HybridAutoencoder
from pyhrom.models.lstm import LSTMNet
from pyhrom.nn.optim import AdamState, CyclicSchedule, adam_step
from pyhrom.nn.params import ParamGroup
from pyhrom.nn.tape import Tape
from pyhrom.numerics import RandomStream, as_matrix
from pyhrom.training import TrainReport, mse_loss

log = logging.getLogger(__name__)


class AugmentedLatentSeries:
    """
    Rows ``[z; p]`` of one or more trajectories, stored contiguously trajectory by trajectory.

    The parameter block ``p`` is constant along a trajectory.
    """

    def __init__(self, values, n_latent: int, trajectory: Optional[Sequence[int]] = None,
                 steps: Optional[Sequence[int]] = None):
        self.values = as_matrix(values, "latent series")
        m, width = self.values.shape
        if not 1 <= n_latent <= width:
            raise HromValidationError(f"latent size {n_latent} does not fit rows of width {width}")
        self.n_latent = int(n_latent)
        self.trajectory = np.zeros(m, dtype=np.int64) if trajectory is None \
            else np.asarray(trajectory, dtype=np.int64).reshape(m)
        self.steps = self._default_steps() if steps is None else np.asarray(steps, dtype=np.int64).reshape(m)

        for lo, hi in self.blocks():
            block = self.values[lo:hi, self.n_latent:]
            if block.size and np.any(block != block[0]):
                raise HromValidationError(f"parameters vary along trajectory {self.trajectory[lo]}")

    @property
    def n_params(self) -> int:
        return self.values.shape[1] - self.n_latent

    @property
    def latent(self) -> np.ndarray:
        return self.values[:, :self.n_latent]

    @property
    def params(self) -> np.ndarray:
        return self.values[:, self.n_latent:]

    def _default_steps(self) -> np.ndarray:
        steps = np.zeros(self.values.shape[0], dtype=np.int64)
        for lo, hi in self.blocks():
            steps[lo:hi] = np.arange(hi - lo)
        return steps

    def blocks(self) -> List[Tuple[int, int]]:
        """ (start, stop) row ranges of the contiguous trajectories. """

        if self.trajectory.size == 0:
            return []
        edges = np.flatnonzero(np.diff(self.trajectory)) + 1
        bounds = np.concatenate([[0], edges, [self.trajectory.size]])
        return [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:])]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({'trajectory': self.trajectory, 'step': self.steps})
        for j in range(self.n_latent):
            frame[f'z{j}'] = self.latent[:, j]
        for j in range(self.n_params):
            frame[f'param{j}'] = self.params[:, j]
        return frame

    def __repr__(self):
        return f'<AugmentedLatentSeries: rows={self.values.shape[0]}, r={self.n_latent}, p={self.n_params}, ' \
               f'trajectories={len(self.blocks())}>'


def augment_latent(z, params) -> np.ndarray:
    """ ``[z; params]``, row by row when ``z`` holds several latent vectors. """

    z = np.asarray(z, dtype=np.float64)
    params = np.asarray(params, dtype=np.float64).reshape(-1)
    if z.ndim == 1:
        return np.concatenate([z, params])
    return np.hstack([z, np.broadcast_to(params, (z.shape[0], params.size))])


def encode_trajectories(model: HybridAutoencoder, snapshots: SnapshotMatrix,
                        rows: Optional[Sequence[int]] = None) -> AugmentedLatentSeries:
    """ Latent series of ``rows`` (default: all), augmented with the per-row parameters when present. """

    rows = np.arange(snapshots.M) if rows is None else np.asarray(rows, dtype=np.int64)
    z = model.encode(snapshots.data[rows]).value
    values = z if snapshots.params is None else np.hstack([z, snapshots.params[rows]])
    trajectory = None if snapshots.trajectory is None else snapshots.trajectory[rows]
    return AugmentedLatentSeries(values, model.r, trajectory)


def build_windows(series: AugmentedLatentSeries, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sliding windows of ``k`` rows and the latent block of the row that follows, never across trajectories.

    :raises HromDomainError: a trajectory is not longer than ``k``.
    :returns: (W x k x (r + p) windows, W x r targets)
    """

    if k < 1:
        raise HromDomainError(f"look-back window must be at least 1, got {k}")

    windows, targets = [], []
    for lo, hi in series.blocks():
        if hi - lo <= k:
            raise HromDomainError(f"trajectory {series.trajectory[lo]} has {hi - lo} steps, needs more than {k}")
        block = series.values[lo:hi]
        idx = np.arange(k, hi - lo)
        windows.append(np.stack([block[i - k:i] for i in idx]))
        targets.append(block[idx, :series.n_latent])

    return np.concatenate(windows), np.concatenate(targets)


@dataclass
class LSTMConfig:
    hidden: List[int] = field(default_factory=lambda: [40, 40])
    k: int = 10
    epochs: int = 400
    batch_size: int = 32
    lr: float = 1e-3
    scheduler: str = 'cyclic'
    cycle_steps: int = 2000
    cycle_low: float = 0.1
    seed: int = 0
    shuffle: bool = True
    log_every: int = 50

    def __post_init__(self):
        if self.k < 1:
            raise HromConfigError("k must be at least 1", field='k')
        if self.epochs < 0:
            raise HromConfigError("epochs must be non-negative", field='epochs')
        if self.batch_size < 1:
            raise HromConfigError("batch_size must be at least 1", field='batch_size')
        if self.lr <= 0:
            raise HromConfigError("lr must be positive", field='lr')
        if self.scheduler not in ('constant', 'cyclic'):
            raise HromConfigError(f"unknown scheduler '{self.scheduler}'", field='scheduler')


def train_lstm(net: LSTMNet, windows: np.ndarray, targets: np.ndarray, config: LSTMConfig) -> Tuple[LSTMNet,
                                                                                                      TrainReport]:
    """
    One-step training on true look-back windows with Adam and (by default) a cyclic learning rate.

    :raises HromOptimizationError: non-finite loss or gradient.
    """

    windows = np.asarray(windows, dtype=np.float64)
    targets = as_matrix(targets, "targets")
    if windows.shape[0] != targets.shape[0]:
        raise HromValidationError("windows and targets differ in count")

    state = AdamState(lr={ParamGroup.NETWORK: config.lr})
    schedule = CyclicSchedule(config.cycle_steps, config.cycle_low, 1.0) if config.scheduler == 'cyclic' else None
    shuffle_stream = RandomStream(config.seed).child(1)

    report = TrainReport('LSTM', net.output_size, config.seed)
    report.losses.append(mse_loss(targets, net.forward(windows).value))
    m = windows.shape[0]
    step = 0

    for epoch in range(1, config.epochs + 1):
        order = shuffle_stream.child(epoch).permutation(m) if config.shuffle else np.arange(m)
        started = time.perf_counter()
        for start in range(0, m, config.batch_size):
            idx = order[start:start + config.batch_size]
            net.store.zero_grads()
            with Tape() as tape:
                loss = mse_loss(targets[idx], net.forward(windows[idx]))
            if not np.isfinite(loss.item()):
                raise HromOptimizationError(f"non-finite LSTM loss at epoch {epoch}")
            tape.backward(loss)
            adam_step(state, net.store, 1.0 if schedule is None else schedule.factor(step))
            step += 1

        report.wall_ms.append(1000.0 * (time.perf_counter() - started))
        report.losses.append(mse_loss(targets, net.forward(windows).value))
        if config.log_every and epoch % config.log_every == 0:
            log.info("lstm epoch %d: one-step loss %.6e", epoch, report.losses[-1])

    report.final_train = report.losses[-1]
    report.best_epoch = int(np.argmin(report.losses))
    report.best_train = report.losses[report.best_epoch]
    return net, report


def rollout(net: LSTMNet, seed_window, n_steps: int, params=()) -> np.ndarray:
    """
    Autoregressive prediction of ``n_steps`` latent vectors; each prediction is re-augmented with ``params``
    and shifted into the window.

    :param seed_window: k x (r + p) augmented latent rows.
    :returns: n_steps x r array.
    """

    window = as_matrix(seed_window, "seed window")
    if window.shape[1] != net.input_size:
        raise HromValidationError(f"seed window rows must have {net.input_size} entries, got {window.shape[1]}")
    if window.shape[0] != net.k:
        raise HromValidationError(f"seed window must hold k = {net.k} rows, got {window.shape[0]}")

    out = np.zeros((n_steps, net.output_size))
    for i in range(n_steps):
        z = net.forward(window[None, :, :]).value[0]
        out[i] = z
        window = np.vstack([window[1:], augment_latent(z, params)])
    return out


@dataclass
class SurrogateError:
    """ Per-trajectory state-space errors; ``lstm`` is ``total - reconstruction``. """

    trajectory: int
    params: Tuple[float, ...]
    total: float
    reconstruction: float

    @property
    def lstm(self) -> float:
        return self.total - self.reconstruction


def surrogate_errors(model: HybridAutoencoder, net: LSTMNet, snapshots: SnapshotMatrix,
                     rows: Optional[Sequence[int]] = None) -> List[SurrogateError]:
    """
    Error decomposition on the trajectories covering ``rows`` (default: the test split).

    For each trajectory the first ``k`` encoded states seed a rollout over the remaining steps. ``total`` compares
    the decoded rollout, ``reconstruction`` the decoded exact latents, with the true states after the seed
    window; both are mean squared norms per step.
    """

    rows = snapshots.test_idx if rows is None else np.asarray(rows, dtype=np.int64)
    series = encode_trajectories(model, snapshots, rows)
    states = snapshots.data[rows]
    k = net.k

    errors = []
    for lo, hi in series.blocks():
        if hi - lo <= k:
            raise HromDomainError(f"trajectory {series.trajectory[lo]} is too short for a window of {k}")
        block = series.values[lo:hi]
        params = block[0, series.n_latent:]
        predicted = rollout(net, block[:k], hi - lo - k, params)

        truth = states[lo + k:hi]
        total = mse_loss(truth, model.decode(predicted).value)
        reconstruction = mse_loss(truth, model.decode(block[k:, :series.n_latent]).value)
        errors.append(SurrogateError(int(series.trajectory[lo]), tuple(float(p) for p in params), total,
                                     reconstruction))
    return errors


def write_latent_csv(series: AugmentedLatentSeries, path: str) -> None:
    series.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, encoding='utf-8')


def read_latent_csv(path: str) -> AugmentedLatentSeries:
    frame = pd.read_csv(path, encoding='utf-8', float_precision='round_trip')
    z_cols = [c for c in frame.columns if c.startswith('z')]
    p_cols = [c for c in frame.columns if c.startswith('param')]
    if 'trajectory' not in frame or 'step' not in frame or not z_cols:
        raise HromFormatError(f"{path}: expected trajectory, step and z columns")
    return AugmentedLatentSeries(frame[z_cols + p_cols].to_numpy(dtype=np.float64), len(z_cols),
                                 frame['trajectory'].to_numpy(), frame['step'].to_numpy())
