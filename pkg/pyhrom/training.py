import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum, unique
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from pyhrom.datasets.snapshots import SnapshotMatrix
from pyhrom.exceptions import HromConfigError, HromDomainError, HromError, HromOptimizationError, \
    HromValidationError
from pyhrom.models.hybrid import ArchConfig, HybridAutoencoder, Variant, build_model
from pyhrom.nn import tape as ops
from pyhrom.nn.optim import AdamState, CyclicSchedule, Scheduler, adam_step
from pyhrom.nn.params import ParamGroup
from pyhrom.nn.tape import Tape, Tensor
from pyhrom.numerics import RandomStream

log = logging.getLogger(__name__)


@unique
class Reduction(Enum):
    SAMPLE = 'sample'
    ENTRY = 'entry'


def mse_loss(x, x_hat, reduction: Union[Reduction, str] = Reduction.SAMPLE) -> Union[float, Tensor]:
    """
    ``(1/M) sum_i ||x_i - x^_i||^2`` over the rows of a batch (``'sample'``), or the per-entry mean (``'entry'``).

    Returns a recorded tensor when either argument is a tensor, a float otherwise.

    :raises HromValidationError: shapes differ.
    """

    recording = isinstance(x, Tensor) or isinstance(x_hat, Tensor)
    x, x_hat = ops.as_tensor(x), ops.as_tensor(x_hat)
    if x.shape != x_hat.shape:
        raise HromValidationError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    if x.ndim != 2 or x.shape[0] == 0:
        raise HromValidationError("mse_loss expects a non-empty two-dimensional batch")

    m, features = x.shape
    scale = 1.0 / m if Reduction(reduction) is Reduction.SAMPLE else 1.0 / (m * features)
    loss = ops.total(ops.square(x_hat - x)) * scale
    return loss if recording else loss.item()


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 64
    network_lr: float = 1e-4
    blend_lr: float = 1e-5
    scheduler: str = 'constant'
    cycle_steps: int = 2000
    cycle_low: float = 0.1
    seed: int = 0
    shuffle: bool = True
    weight_decay: float = 0.0
    clip_norm: Optional[float] = None
    reduction: str = 'sample'
    keep_best: bool = True
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    log_every: int = 100

    def __post_init__(self):
        if self.epochs < 0:
            raise HromConfigError("epochs must be non-negative", field='epochs')
        if self.batch_size < 1:
            raise HromConfigError("batch_size must be at least 1", field='batch_size')
        if self.network_lr <= 0 or self.blend_lr <= 0:
            raise HromConfigError("learning rates must be positive", field='network_lr')
        for name, kind in (('scheduler', Scheduler), ('reduction', Reduction)):
            try:
                kind(getattr(self, name))
            except ValueError:
                raise HromConfigError(f"unknown {name} '{getattr(self, name)}'", field=name)
        if self.weight_decay < 0:
            raise HromConfigError("weight_decay must be non-negative", field='weight_decay')

    def adam(self, lr: Optional[Dict[ParamGroup, float]] = None) -> AdamState:
        lr = {ParamGroup.NETWORK: self.network_lr, ParamGroup.BLEND: self.blend_lr} if lr is None else lr
        return AdamState(lr=lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps, weight_decay=self.weight_decay,
                         clip_norm=self.clip_norm)

    def schedule(self) -> Optional[CyclicSchedule]:
        if Scheduler(self.scheduler) is Scheduler.CYCLIC:
            return CyclicSchedule(self.cycle_steps, self.cycle_low, 1.0)
        return None


@dataclass
class TrainReport:
    """
    ``losses[0]`` is the full-train loss before the first step, ``losses[e]`` the one after epoch ``e``.

    ``wall_ms`` and ``best_state`` do not take part in equality.
    """

    variant: str
    rank: int
    seed: int
    losses: List[float] = field(default_factory=list)
    final_train: float = float('nan')
    final_test: float = float('nan')
    best_epoch: int = 0
    best_train: float = float('nan')
    best_test: float = float('nan')
    wall_ms: List[float] = field(default_factory=list, compare=False)
    best_state: Optional[dict] = field(default=None, compare=False, repr=False)

    @property
    def mean_wall_ms(self) -> float:
        return float(np.mean(self.wall_ms)) if self.wall_ms else 0.0

    def to_frame(self, grid: Optional[int] = None) -> pd.DataFrame:
        """ One row per epoch: (variant, grid, rank, seed, epoch, train_loss, wall_ms). """

        epochs = np.arange(len(self.losses))
        return pd.DataFrame({'variant': self.variant,
                             'grid': grid,
                             'rank': self.rank,
                             'seed': self.seed,
                             'epoch': epochs,
                             'train_loss': self.losses,
                             'wall_ms': [0.0] + list(self.wall_ms)})


def dataset_loss(model, x: np.ndarray, reduction: str = 'sample', batch_size: int = 4096,
                 targets: Optional[np.ndarray] = None) -> float:
    """ Exact loss over all rows of ``x`` (against ``targets`` when given), evaluated in chunks without recording. """

    if x.shape[0] == 0:
        return float('nan')
    targets = x if targets is None else targets
    total = 0.0
    for start in range(0, x.shape[0], batch_size):
        chunk = x[start:start + batch_size]
        total += np.sum((model.forward(chunk).value - targets[start:start + batch_size]) ** 2)
    if Reduction(reduction) is Reduction.SAMPLE:
        return float(total / x.shape[0])
    return float(total / x.size)


def train_autoencoder(model: HybridAutoencoder, snapshots: SnapshotMatrix, config: TrainConfig) -> TrainReport:
    """
    Minibatch Adam on the reconstruction MSE of the train split.

    Network tensors use ``network_lr``, the blend vectors ``blend_lr``; the POD basis stays fixed. The POD
    variant has nothing to train and returns its closed-form errors.

    :raises HromOptimizationError: the loss or a gradient turns non-finite. The model is reset to the last
        finite state, whose checkpoint is attached to the exception.
    """

    x_train, x_test = snapshots.train, snapshots.test
    report = TrainReport(str(model.variant), model.r, config.seed)

    initial = dataset_loss(model, x_train, config.reduction)
    report.losses.append(initial)
    report.best_train = initial
    report.best_test = dataset_loss(model, x_test, config.reduction)

    if model.variant is Variant.POD or not model.store.trainable():
        report.final_train, report.final_test = initial, report.best_test
        return report

    state = config.adam()
    schedule = config.schedule()
    shuffle_stream = RandomStream(config.seed).child(1)
    last_good = model.store.state()
    best_state = last_good
    m = x_train.shape[0]
    step = 0

    for epoch in range(1, config.epochs + 1):
        order = shuffle_stream.child(epoch).permutation(m) if config.shuffle else np.arange(m)
        started = time.perf_counter()

        for start in range(0, m, config.batch_size):
            batch = x_train[order[start:start + config.batch_size]]
            model.store.zero_grads()
            with Tape() as tape:
                loss = mse_loss(batch, model.forward(batch), config.reduction)
            if not np.isfinite(loss.item()):
                _abort(model, last_good, f"non-finite loss at epoch {epoch}")
            tape.backward(loss)
            try:
                adam_step(state, model.store, 1.0 if schedule is None else schedule.factor(step))
            except HromOptimizationError as e:
                _abort(model, last_good, f"{e} at epoch {epoch}", e.tensor)
            step += 1

        report.wall_ms.append(1000.0 * (time.perf_counter() - started))
        train_loss = dataset_loss(model, x_train, config.reduction)
        if not np.isfinite(train_loss):
            _abort(model, last_good, f"non-finite train loss after epoch {epoch}")
        report.losses.append(train_loss)
        last_good = model.store.state()

        if config.keep_best and train_loss < report.best_train:
            report.best_epoch, report.best_train = epoch, train_loss
            report.best_test = dataset_loss(model, x_test, config.reduction)
            best_state = last_good

        if config.log_every and epoch % config.log_every == 0:
            log.info("%s r=%d seed=%d epoch %d: train loss %.6e", model.variant, model.r, config.seed, epoch,
                     train_loss)
        else:
            log.debug("%s r=%d seed=%d epoch %d: train loss %.6e", model.variant, model.r, config.seed, epoch,
                      train_loss)

    report.final_train = report.losses[-1]
    report.final_test = dataset_loss(model, x_test, config.reduction)
    if not config.keep_best:
        report.best_epoch, report.best_train, report.best_test = config.epochs, report.final_train, report.final_test
    report.best_state = best_state
    return report


def _abort(model, last_good: dict, message: str, tensor: Optional[str] = None):
    model.store.load_state(last_good)
    raise HromOptimizationError(message, tensor=tensor, checkpoint=model.to_bytes())


@dataclass
class EnsembleResult:
    reports: Dict[Tuple[int, int], TrainReport] = field(default_factory=dict)
    failures: Dict[Tuple[int, int], str] = field(default_factory=dict)

    def aggregate(self) -> pd.DataFrame:
        return aggregate_reports(list(self.reports.values()))


def aggregate_reports(reports: Sequence[TrainReport]) -> pd.DataFrame:
    """ Mean and (population) std of the final errors per (variant, rank). """

    columns = ['variant', 'rank', 'n', 'train_mean', 'train_std', 'test_mean', 'test_std', 'wall_ms_mean']
    if not reports:
        return pd.DataFrame(columns=columns)

    frame = pd.DataFrame([{'variant': r.variant, 'rank': r.rank, 'train': r.final_train, 'test': r.final_test,
                           'wall_ms': r.mean_wall_ms} for r in reports])
    grouped = frame.groupby(['variant', 'rank'], sort=True)
    out = pd.DataFrame({'n': grouped['test'].size(),
                        'train_mean': grouped['train'].mean(),
                        'train_std': grouped['train'].std(ddof=0),
                        'test_mean': grouped['test'].mean(),
                        'test_std': grouped['test'].std(ddof=0),
                        'wall_ms_mean': grouped['wall_ms'].mean()}).reset_index()
    return out[columns]


def _train_member(variant: Variant, data: SnapshotMatrix, rank: int, seed: int, arch: Optional[ArchConfig],
                  config: TrainConfig):
    try:
        model = build_model(variant, data, rank, arch, RandomStream(seed).child(0))
        report = train_autoencoder(model, data, replace(config, seed=seed))
        return report, model.to_bytes(), None
    except HromError as e:
        return None, None, f'{type(e).__name__}: {e}'


def ensemble_train(variant,
                   data: SnapshotMatrix,
                   ranks: Sequence[int],
                   n_seeds: int,
                   config: TrainConfig,
                   arch: Optional[ArchConfig] = None,
                   workers: int = 1,
                   seed_offset: int = 0,
                   checkpoints: Optional[Dict[Tuple[int, int], bytes]] = None,
                   seeds: Optional[Sequence[int]] = None) -> EnsembleResult:
    """
    Trains one model per (rank, seed), seeds ``seed_offset .. seed_offset + n_seeds - 1`` unless an explicit
    ``seeds`` list is given.

    Members run in a process pool when ``workers > 1``. Failed members are recorded and left out of the
    aggregate with a warning.

    :param checkpoints: filled with the encoded trained models when given.
    :raises HromDomainError: n_seeds < 1 or no ranks.
    """

    variant = Variant.parse(variant)
    if n_seeds < 1:
        raise HromDomainError(f"n_seeds must be at least 1, got {n_seeds}")
    if not ranks:
        raise HromDomainError("ensemble needs at least one rank")

    seeds = [seed_offset + i for i in range(n_seeds)] if seeds is None else [int(s) for s in seeds]
    tasks = [(int(rank), seed) for rank in ranks for seed in seeds]
    result = EnsembleResult()

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_train_member, variant, data, rank, seed, arch, config) for rank, seed in tasks]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_train_member(variant, data, rank, seed, arch, config) for rank, seed in tasks]

    for key, (report, checkpoint, failure) in zip(tasks, outcomes):
        if failure is not None:
            log.warning("%s rank %d seed %d failed: %s", variant, key[0], key[1], failure)
            result.failures[key] = failure
            continue
        result.reports[key] = report
        if checkpoints is not None:
            checkpoints[key] = checkpoint

    if result.failures:
        log.warning("%s: aggregating over %d of %d members", variant, len(result.reports), len(tasks))
    return result
