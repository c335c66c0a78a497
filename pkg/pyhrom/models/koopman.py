"""
Koopman forecasting with learnable frequencies.

The state at time ``t`` is decoded from the trigonometric observables
``Omega(t) = [cos(w_1 t) .. cos(w_Nf t), sin(w_1 t) .. sin(w_Nf t)]``, so the latent rank is ``2 Nf``. Only a
decoder is learned: the POD branch ``(Omega K) Ur^T + c`` over a frozen rank-2Nf basis, a network branch, and for
the learnable weighted variant the component blend ``b``.
"""

import copy
import logging
import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize_scalar

from pyhrom.container import HromContainer, TensorEntry
from pyhrom.datasets.snapshots import SnapshotMatrix
from pyhrom.exceptions import HromConfigError, HromDomainError, HromFormatError, HromOptimizationError
from pyhrom.models.hybrid import ArchConfig, ParameterCount, Variant, blend
from pyhrom.models.pod import compute_pod
from pyhrom.nn import tape as ops
from pyhrom.nn.mlp import Activation, MLP, kaiming_init
from pyhrom.nn.optim import AdamState, adam_step
from pyhrom.nn.params import ParamGroup, ParamStore
from pyhrom.nn.tape import Tape, Tensor
from pyhrom.numerics import RandomStream
from pyhrom.training import TrainReport, mse_loss

log = logging.getLogger(__name__)

PAD_FACTOR = 8
MAX_SUBHARMONIC = 4


@dataclass
class KoopmanConfig:
    n_frequencies: int = 1
    epochs: int = 1000
    batch_size: int = 1280
    network_lr: float = 3e-4
    blend_lr: float = 1e-5
    frequency_lr: float = 3e-4
    dt: float = 1.0
    seed: int = 0
    shuffle: bool = True
    reduction: str = 'sample'
    log_every: int = 100

    def __post_init__(self):
        if self.n_frequencies < 1:
            raise HromConfigError("n_frequencies must be at least 1", field='n_frequencies')
        if self.epochs < 0:
            raise HromConfigError("epochs must be non-negative", field='epochs')
        if self.batch_size < 1:
            raise HromConfigError("batch_size must be at least 1", field='batch_size')
        if self.network_lr < 0 or self.blend_lr < 0 or self.frequency_lr < 0:
            raise HromConfigError("learning rates must be non-negative", field='frequency_lr')
        if self.dt <= 0:
            raise HromConfigError("dt must be positive", field='dt')


def koopman_features(omega, t) -> np.ndarray:
    """
    ``[cos(omega t), sin(omega t)]``; a vector for scalar ``t``, one row per time otherwise.
    """

    omega = np.asarray(omega, dtype=np.float64).reshape(-1)
    phase = np.multiply.outer(np.asarray(t, dtype=np.float64), omega)
    return np.concatenate([np.cos(phase), np.sin(phase)], axis=-1)


def _features(omega, t: np.ndarray) -> Tensor:
    phase = np.asarray(t, dtype=np.float64).reshape(-1, 1) * omega
    return ops.concat([ops.cos(phase), ops.sin(phase)], axis=1)


@HromContainer.record_kind('koopman')
class KoopmanModel(HromContainer):
    def __init__(self,
                 variant,
                 n_frequencies: int,
                 n_cells: int,
                 n_components: int,
                 dt: float = 1.0,
                 arch: Optional[ArchConfig] = None,
                 basis: Optional[np.ndarray] = None,
                 mean=None,
                 std=None):
        self._variant = Variant.parse(variant)
        self._nf, self._n, self._q = int(n_frequencies), int(n_cells), int(n_components)
        self._dt = float(dt)
        self._arch = ArchConfig() if arch is None else arch
        features = self._n * self._q
        r = 2 * self._nf

        self.store = ParamStore()
        self.omega = self.store.add('omega', np.zeros(self._nf), ParamGroup.FREQUENCY)
        self.decoder = None
        self.mixing = None
        self.offset = None
        self.b = None

        if self._variant.uses_pod:
            if basis is None or np.shape(basis) != (features, r):
                raise HromConfigError(f"variant {self._variant} needs a ({features}, {r}) POD basis", field='basis')
            self.store.add('pod.basis', basis, ParamGroup.FIXED)
            self.mixing = self.store.add('pod.mixing', np.eye(r))
            self.offset = self.store.add('pod.offset', np.zeros(features))

        if self._variant.uses_networks:
            hidden = self._arch.hidden_sizes(r)
            act = Activation(self._arch.activation)
            self.decoder = MLP([r] + hidden[::-1] + [features], [act] * len(hidden) + [Activation.LINEAR],
                               self.store, 'decoder')

        if self._variant.uses_blend:
            self.b = self.store.add('blend.b', np.zeros(self._q), ParamGroup.BLEND)

        self.mean = np.zeros(features) if mean is None else np.asarray(mean, dtype=np.float64)
        self.std = np.ones(features) if std is None else np.asarray(std, dtype=np.float64)

    @property
    def variant(self) -> Variant:
        return self._variant

    @property
    def n_frequencies(self) -> int:
        return self._nf

    @property
    def r(self) -> int:
        return 2 * self._nf

    @property
    def N(self) -> int:
        return self._n

    @property
    def Q(self) -> int:
        return self._q

    @property
    def dt(self) -> float:
        return self._dt

    @property
    def basis(self) -> Optional[np.ndarray]:
        return self.store['pod.basis'].value if 'pod.basis' in self.store else None

    def features(self, t) -> Tensor:
        return _features(self.omega, t)

    def pod_decode(self, phi) -> Tensor:
        return (ops.as_tensor(phi) @ self.mixing) @ self.basis.T + self.offset

    def decode_features(self, phi) -> Tensor:
        if self._variant is Variant.POD:
            return self.pod_decode(phi)
        if self._variant is Variant.AE:
            return self.decoder(phi)
        if self._variant is Variant.SIMPLE_HYBRID:
            return self.pod_decode(phi) + self.decoder(phi)
        return blend(self.pod_decode(phi), self.decoder(phi), self.b, self._q)

    def decode(self, t) -> Tensor:
        return self.decode_features(self.features(t))

    def count_parameters(self) -> ParameterCount:
        return ParameterCount(self.store.count(trainable_only=True),
                              self.store.count() - self.store.count(trainable_only=True))

    @classmethod
    def from_parts(cls, meta: dict, tensors: 'OrderedDict[str, TensorEntry]') -> 'KoopmanModel':
        try:
            arch = ArchConfig(hidden=meta['hidden'], activation=meta['activation'])
            basis = tensors['pod.basis'][0] if 'pod.basis' in tensors else None
            model = cls(meta['variant'], meta['n_frequencies'], meta['N'], meta['Q'], meta['dt'], arch, basis,
                        tensors['mean'][0], tensors['std'][0])
            model.store.load_state(OrderedDict((name, tensors[name][0]) for name in model.store.names()))
        except KeyError as e:
            raise HromFormatError(f"koopman checkpoint misses {e}")
        return model

    def _container_meta(self) -> dict:
        return {'variant': str(self._variant), 'n_frequencies': self._nf, 'N': self._n, 'Q': self._q,
                'dt': self._dt, 'hidden': self._arch.hidden_sizes(self.r),
                'activation': str(Activation(self._arch.activation))}

    def _container_tensors(self) -> 'OrderedDict[str, TensorEntry]':
        tensors = OrderedDict((name, (p.value, p.group.value)) for name, p in self.store.items())
        tensors['mean'] = (self.mean, 'stats')
        tensors['std'] = (self.std, 'stats')
        return tensors

    def __repr__(self):
        return f'<KoopmanModel({self._variant}): Nf={self._nf}, N={self._n}, Q={self._q}, ' \
               f'omega={np.round(self.omega.value, 6).tolist()}>'


def koopman_decode(model: KoopmanModel, t) -> np.ndarray:
    """ Decoded states, one row per time in ``t``. """

    return model.decode(np.atleast_1d(t)).value


def koopman_forecast(model: KoopmanModel, steps) -> np.ndarray:
    """ Decoded states at step indices ``steps`` (time ``step * dt``). """

    return koopman_decode(model, np.asarray(steps, dtype=np.float64) * model.dt)


def mirrored(model: KoopmanModel) -> KoopmanModel:
    """
    Copy with ``omega`` negated and the sine block of every decoder input negated; decodes identically.
    """

    twin = copy.deepcopy(model)
    nf = twin.n_frequencies
    twin.omega.value[...] = -twin.omega.value
    if 'pod.mixing' in twin.store:
        twin.mixing.value[nf:] *= -1.0
    if twin.decoder is not None:
        twin.decoder.weights[0].value[nf:] *= -1.0
    return twin


def _train_times(snapshots: SnapshotMatrix, dt: float) -> np.ndarray:
    if snapshots.times is not None:
        return snapshots.times[snapshots.train_idx]
    return snapshots.train_idx * dt


def _lstsq_fit(coefficients: np.ndarray, times: np.ndarray, omega: np.ndarray) -> Tuple[np.ndarray, float]:
    design = np.hstack([koopman_features(omega, times), np.ones((times.size, 1))])
    solution, _, _, _ = la.lstsq(design, coefficients)
    residual = float(np.sum((design @ solution - coefficients) ** 2))
    return solution, residual


def _self_distance(states: np.ndarray, shift: int) -> float:
    centered = states - states.mean(axis=0)
    scale = float(np.mean(np.sum(centered ** 2, axis=1)))
    if scale == 0.0:
        return 0.0
    return float(np.mean(np.sum((states[shift:] - states[:-shift]) ** 2, axis=1))) / scale


def initial_frequencies(states: np.ndarray, coefficients: np.ndarray, times: np.ndarray, n_frequencies: int,
                        dt: float, stream: RandomStream) -> np.ndarray:
    """
    Frequencies from the spectrum of the POD coefficient series.

    Each frequency starts at a peak of the zero-padded power spectrum summed over the (centered) coefficient
    series, moves to the sub-harmonic whose period best matches the training states, and is polished by a
    bounded minimisation of the least-squares residual within one spectral bin.
    """

    m = coefficients.shape[0]
    centered = coefficients - coefficients.mean(axis=0)
    n_fft = PAD_FACTOR * m
    power = np.sum(np.abs(np.fft.rfft(centered, n=n_fft, axis=0)) ** 2, axis=1)
    power[0] = 0.0
    grid = 2 * np.pi * np.fft.rfftfreq(n_fft, d=dt)
    bin_width = 2 * np.pi / (m * dt)

    if m < 4 or power.max() <= 1e-12 * max(1.0, float(np.sum(centered ** 2))):
        log.debug("no oscillation in the POD coefficients, drawing frequencies uniformly")
        return stream.uniform(0.0, np.pi / dt, n_frequencies)

    omega = np.zeros(n_frequencies)
    for j in range(n_frequencies):
        peak = grid[int(np.argmax(power))]
        if peak <= 0.0:
            omega[j:] = stream.uniform(0.0, np.pi / dt, n_frequencies - j)
            break

        distances = []
        for order in range(1, MAX_SUBHARMONIC + 1):
            shift = int(round(order * 2 * np.pi / (peak * dt)))
            if 0 < shift < m // 2:
                distances.append((order, _self_distance(states, shift)))
        if distances:
            best = min(d for _, d in distances)
            order = next(o for o, d in distances if d <= 2.0 * best + 1e-12)
            peak /= order

        lower, upper = max(peak - bin_width, 1e-12), peak + bin_width

        def residual(w):
            trial = omega.copy()
            trial[j] = w
            return _lstsq_fit(coefficients, times, trial[:j + 1])[1]

        omega[j] = minimize_scalar(residual, bounds=(lower, upper), method='bounded',
                                   options={'xatol': 1e-10 * max(1.0, peak)}).x
        power[np.abs(grid - omega[j]) <= bin_width] = 0.0

    return omega


def build_koopman(variant,
                  data: SnapshotMatrix,
                  n_frequencies: int,
                  arch: Optional[ArchConfig] = None,
                  stream: Optional[RandomStream] = None,
                  dt: float = 1.0) -> KoopmanModel:
    """
    Koopman model for the train split of ``data`` (time-ordered rows): rank-2Nf POD basis, spectral frequency
    initialisation, least-squares POD branch, Kaiming-initialized network branch and ``b = 0``.
    """

    variant = Variant.parse(variant)
    stream = RandomStream(0) if stream is None else stream
    r = 2 * n_frequencies
    x = data.train
    if x.shape[0] < 2:
        raise HromDomainError("Koopman training needs at least two snapshots")

    pod = compute_pod(data, min(r, *x.shape))
    if pod.r < r:
        raise HromDomainError(f"{n_frequencies} frequencies need a rank-{r} basis, the data allows {pod.r}")

    times = _train_times(data, dt)
    coefficients = x @ pod.Ur
    omega = initial_frequencies(x, coefficients, times, n_frequencies, dt, stream.child(0))

    model = KoopmanModel(variant, n_frequencies, data.N, data.Q, dt, arch,
                         pod.Ur if variant.uses_pod else None, data.mean, data.std)
    model.omega.assign(omega)

    if variant.uses_pod:
        solution, _ = _lstsq_fit(coefficients, times, omega)
        model.mixing.assign(solution[:r])
        model.offset.assign(solution[r] @ pod.Ur.T)
    if variant.uses_networks:
        kaiming_init(model.decoder, stream.child(1))

    log.debug("initial frequencies %s", omega)
    return model


def train_koopman(model: KoopmanModel, snapshots: SnapshotMatrix, config: KoopmanConfig) -> Tuple[KoopmanModel,
                                                                                                  TrainReport]:
    """
    Minimizes ``sum_i ||x_i - psi(Omega(omega t_i))||^2`` over the frequencies and the decoder.

    The frequency rate is ``frequency_lr / T`` with ``T`` the length of the training horizon.

    :raises HromOptimizationError: non-finite loss or gradient.
    """

    x = snapshots.train
    times = _train_times(snapshots, config.dt)
    horizon = max(float(times.max() - times.min()) + config.dt, config.dt)

    state = AdamState(lr={ParamGroup.NETWORK: config.network_lr, ParamGroup.BLEND: config.blend_lr,
                          ParamGroup.FREQUENCY: config.frequency_lr / horizon})
    shuffle_stream = RandomStream(config.seed).child(1)

    def full_loss():
        return mse_loss(x, model.decode(times).value, config.reduction)

    report = TrainReport(str(model.variant), model.r, config.seed)
    report.losses.append(full_loss())
    m = x.shape[0]

    for epoch in range(1, config.epochs + 1):
        order = shuffle_stream.child(epoch).permutation(m) if config.shuffle else np.arange(m)
        started = time.perf_counter()
        for start in range(0, m, config.batch_size):
            idx = order[start:start + config.batch_size]
            model.store.zero_grads()
            with Tape() as tape:
                loss = mse_loss(x[idx], model.decode(times[idx]), config.reduction)
            if not np.isfinite(loss.item()):
                raise HromOptimizationError(f"non-finite Koopman loss at epoch {epoch}")
            tape.backward(loss)
            adam_step(state, model.store)

        report.wall_ms.append(1000.0 * (time.perf_counter() - started))
        report.losses.append(full_loss())
        if config.log_every and epoch % config.log_every == 0:
            log.info("koopman %s epoch %d: loss %.6e, omega %s", model.variant, epoch, report.losses[-1],
                     model.omega.value)

    report.final_train = report.losses[-1]
    report.best_epoch = int(np.argmin(report.losses))
    report.best_train = report.losses[report.best_epoch]
    if snapshots.test_idx.size:
        test_times = snapshots.times[snapshots.test_idx] if snapshots.times is not None \
            else snapshots.test_idx * config.dt
        report.final_test = mse_loss(snapshots.test, model.decode(test_times).value, config.reduction)
    return model, report


def frequency_error(model: KoopmanModel, reference: List[float]) -> float:
    """
    Largest relative deviation of the sorted learned frequencies from ``reference``; NaN when the counts differ
    or a reference frequency is not positive.
    """

    learned = np.sort(np.abs(model.omega.value))
    reference = np.asarray(reference, dtype=np.float64).ravel()
    if reference.size != learned.size or not np.all(reference > 0):
        return float('nan')
    reference = np.sort(reference)
    return float(np.max(np.abs(learned - reference) / reference))
