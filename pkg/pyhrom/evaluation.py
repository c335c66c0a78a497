import copy
import itertools
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from pyhrom.datasets.snapshots import SnapshotMatrix, add_noise
from pyhrom.exceptions import HromConfigError, HromDomainError, HromValidationError
from pyhrom.models.hybrid import HybridAutoencoder, Variant
from pyhrom.nn.params import ParamStore
from pyhrom.nn.tape import Tape, Tensor
from pyhrom.numerics import RandomStream, as_matrix
from pyhrom.training import Reduction, dataset_loss, mse_loss

log = logging.getLogger(__name__)


@dataclass
class MetricReport:
    """
    One measured quantity plus its spread over seeds or directions.

    ``value`` may be ``+inf`` for a sharpness estimate whose perturbed loss overflowed; NaN is rejected.
    """

    metric: str
    value: float
    dispersion: float = 0.0
    variant: Optional[str] = None
    grid: Optional[int] = None
    rank: Optional[int] = None
    seed: Optional[int] = None
    noise_level: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.value = float(self.value)
        self.dispersion = float(self.dispersion)
        if np.isnan(self.value):
            raise HromValidationError(f"metric {self.metric} is NaN")

    def as_row(self) -> dict:
        row = asdict(self)
        row.update(row.pop('extra'))
        return row


def l2_error(model, x, targets=None) -> float:
    """
    ``(1/|D|) sum_i ||x_i - reconstruct(x_i)||^2`` in the units of ``x``, the training loss on ``D``.

    :param targets: rows the reconstructions are compared with (default: ``x`` itself).
    :raises HromDomainError: empty subset.
    """

    x = x.data if isinstance(x, SnapshotMatrix) else as_matrix(x, "subset")
    if x.shape[0] == 0:
        raise HromDomainError("l2_error of an empty subset")
    if targets is not None:
        targets = as_matrix(targets, "targets")
        if targets.shape != x.shape:
            raise HromValidationError(f"targets of shape {targets.shape} do not match inputs {x.shape}")
    return dataset_loss(model, x, targets=targets)


@dataclass
class SharpnessConfig:
    rho: float = 0.1
    n_directions: int = 32
    n_ascent_steps: int = 5
    subset: str = 'train'
    max_samples: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.rho < 0:
            raise HromConfigError("rho must be non-negative", field='rho')
        if self.n_directions < 1:
            raise HromConfigError("n_directions must be at least 1", field='n_directions')
        if self.n_ascent_steps < 0:
            raise HromConfigError("n_ascent_steps must be non-negative", field='n_ascent_steps')
        if self.subset not in ('train', 'test'):
            raise HromConfigError(f"unknown subset '{self.subset}'", field='subset')


class SharpnessEstimate(NamedTuple):
    value: float
    dispersion: float
    per_direction: np.ndarray


def perturbation_sharpness(loss_fn: Callable[[], Tensor], store: ParamStore, rho: float, n_directions: int,
                           n_ascent_steps: int, stream: RandomStream) -> SharpnessEstimate:
    """
    ``max_{||d|| <= rho} L(theta + d) - L(theta)`` over the trainable tensors of ``store``.

    Each direction starts at a random point of the sphere of radius ``rho`` and takes ``n_ascent_steps``
    normalized gradient steps of length ``rho``, projected back onto the ball; its value is the largest
    increase seen along the way. Direction ``i`` draws from ``stream.child(i)``. The tensors are restored
    before returning.
    """

    theta = store.flat_trainable()
    if rho == 0 or theta.size == 0:
        return SharpnessEstimate(0.0, 0.0, np.zeros(n_directions))

    def evaluate(delta: np.ndarray, with_grad: bool) -> Tuple[float, Optional[np.ndarray]]:
        store.assign_flat_trainable(theta + delta)
        if not with_grad:
            return float(loss_fn().value), None
        store.zero_grads()
        with Tape() as tape:
            loss = loss_fn()
        value = float(loss.value)
        if not np.isfinite(value):
            return value, None
        tape.backward(loss)
        return value, store.flat_grads()

    try:
        base, _ = evaluate(np.zeros_like(theta), with_grad=False)
        increases = np.zeros(n_directions)
        for i in range(n_directions):
            delta = rho * stream.child(i).unit_vector(theta.size)
            best = -np.inf
            for step in range(n_ascent_steps + 1):
                value, grad = evaluate(delta, with_grad=step < n_ascent_steps)
                if not np.isfinite(value):
                    log.warning("sharpness direction %d: non-finite perturbed loss at step %d", i, step)
                    best = np.inf
                    break
                best = max(best, value - base)
                if grad is None:
                    break
                norm = np.linalg.norm(grad)
                if norm == 0.0:
                    break
                delta = delta + rho * grad / norm
                length = np.linalg.norm(delta)
                if length > rho:
                    delta *= rho / length
            increases[i] = best
    finally:
        store.assign_flat_trainable(theta)

    finite = increases[np.isfinite(increases)]
    return SharpnessEstimate(float(np.max(increases)), float(np.std(finite)) if finite.size else 0.0, increases)


def estimate_sharpness(model: HybridAutoencoder, snapshots: SnapshotMatrix, config: SharpnessConfig) -> MetricReport:
    """
    Sharpness of the per-sample reconstruction loss on a subset, measured on a deep copy of ``model``.

    Only trainable tensors are perturbed; the POD basis is not.
    """

    rows = snapshots.train_idx if config.subset == 'train' else snapshots.test_idx
    if config.max_samples is not None:
        rows = rows[:config.max_samples]
    x = snapshots.data[rows]
    if x.shape[0] == 0:
        raise HromDomainError(f"sharpness on an empty {config.subset} subset")

    clone = copy.deepcopy(model)
    estimate = perturbation_sharpness(lambda: mse_loss(x, clone.forward(x), Reduction.SAMPLE), clone.store,
                                      config.rho, config.n_directions, config.n_ascent_steps,
                                      RandomStream(config.seed))
    return MetricReport('sharpness', estimate.value, estimate.dispersion, str(model.variant), model.N, model.r,
                        extra={'rho': config.rho})


def noise_robustness_sweep(model,
                           snapshots: SnapshotMatrix,
                           levels: Sequence[float] = (0.1, 0.2, 0.3),
                           stream: Optional[RandomStream] = None,
                           target: str = 'clean',
                           rows: Optional[Sequence[int]] = None) -> List[MetricReport]:
    """
    Reconstruction error from noisy inputs, one report per level (default rows: the test split).

    The noise std is ``level * max|u|`` with ``max|u|`` taken over the whole physical dataset. With
    ``target='clean'`` the reconstructions are compared with the noise-free rows, with ``'noisy'`` with the
    noisy inputs. Level ``i`` draws from ``stream.child(i)``.
    """

    if target not in ('clean', 'noisy'):
        raise HromConfigError(f"unknown noise target '{target}'", field='target')
    stream = RandomStream(0) if stream is None else stream
    rows = snapshots.test_idx if rows is None else np.asarray(rows, dtype=np.int64)
    clean = snapshots.subset(rows)
    max_abs = float(np.max(np.abs(snapshots.physical())))

    reports = []
    for i, level in enumerate(levels):
        noisy = add_noise(clean, level, stream.child(i), max_abs)
        targets = clean.data if target == 'clean' else noisy.data
        value = l2_error(model, noisy.data, targets)
        reports.append(MetricReport('noise_l2', value, variant=str(model.variant), grid=model.N, rank=model.r,
                                    noise_level=float(level)))
        log.debug("noise level %.2f: error %.6e", level, value)
    return reports


class ConvergenceFit(NamedTuple):
    q: float
    intercept: float

    def predict(self, ranks) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(ranks, dtype=np.float64) ** (-self.q)


def fit_convergence_rate(ranks: Sequence[float], errors: Sequence[float]) -> ConvergenceFit:
    """
    Least-squares line through ``(log r, log e)``; errors behave as ``exp(intercept) * r^-q``.

    :raises HromDomainError: fewer than three pairs, or a non-positive rank or error.
    """

    ranks = np.asarray(ranks, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if ranks.shape != errors.shape or ranks.ndim != 1:
        raise HromValidationError("ranks and errors must be vectors of the same length")
    if ranks.size < 3:
        raise HromDomainError(f"a convergence fit needs at least 3 points, got {ranks.size}")
    if np.any(errors <= 0) or np.any(ranks <= 0):
        raise HromDomainError("ranks and errors must be positive")

    slope, intercept = np.polyfit(np.log(ranks), np.log(errors), 1)
    return ConvergenceFit(float(-slope), float(intercept))


@dataclass
class ContributionSplit:
    """ Mean share of the POD branch in the blended latent and reconstruction (norm-ratio convention). """

    latent_pod: float
    reconstruction_pod: float
    latent_degenerate: int = 0
    reconstruction_degenerate: int = 0
    convention: str = 'norm-ratio'

    @property
    def latent_nn(self) -> float:
        return 1.0 - self.latent_pod

    @property
    def reconstruction_nn(self) -> float:
        return 1.0 - self.reconstruction_pod


def _pod_share(pod_norm: np.ndarray, nn_norm: np.ndarray) -> Tuple[float, int]:
    denominator = pod_norm + nn_norm
    degenerate = denominator == 0
    share = np.where(degenerate, 1.0, pod_norm / np.where(degenerate, 1.0, denominator))
    return float(np.mean(share)), int(np.count_nonzero(degenerate))


def contribution_split(model: HybridAutoencoder, samples) -> ContributionSplit:
    """
    Per sample ``||(1 - a) phi_POD|| / (||(1 - a) phi_POD|| + ||a phi_NN||)`` averaged over the samples, and
    the same with ``b`` and the decoder branches at the blended latent. A zero denominator counts as a POD
    share of one and is flagged.

    :raises HromDomainError: the model is not a learnable weighted hybrid.
    """

    if model.variant is not Variant.LWH:
        raise HromDomainError(f"contribution split needs a {Variant.LWH} model, got {model.variant}")
    x = samples.data if isinstance(samples, SnapshotMatrix) else as_matrix(samples, "samples")
    if x.shape[0] == 0:
        raise HromDomainError("contribution split of an empty sample set")

    a, b = model.a.value, model.b.value
    pod_latent = np.linalg.norm(model.pod_encode(x).value * (1.0 - a), axis=1)
    nn_latent = np.linalg.norm(model.nn_encode(x).value * a, axis=1)
    latent_share, latent_flags = _pod_share(pod_latent, nn_latent)

    z = model.encode(x).value
    cells = (x.shape[0], model.N, model.Q)
    pod_recon = np.linalg.norm((model.pod_decode(z).value.reshape(cells) * (1.0 - b)).reshape(x.shape[0], -1), axis=1)
    nn_recon = np.linalg.norm((model.nn_decode(z).value.reshape(cells) * b).reshape(x.shape[0], -1), axis=1)
    recon_share, recon_flags = _pod_share(pod_recon, nn_recon)

    if latent_flags or recon_flags:
        log.info("contribution split: %d latent and %d reconstruction samples with zero norm", latent_flags,
                 recon_flags)
    return ContributionSplit(latent_share, recon_share, latent_flags, recon_flags)


@dataclass
class SimilarityReport:
    pairs: Dict[Tuple[int, int], float]
    skipped: int = 0

    @property
    def scores(self) -> np.ndarray:
        return np.array(list(self.pairs.values()))

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores))

    @property
    def std(self) -> float:
        return float(np.std(self.scores))

    @property
    def min(self) -> float:
        return float(np.min(self.scores))

    @property
    def max(self) -> float:
        return float(np.max(self.scores))


def latent_cosine_similarity(latents: Sequence[np.ndarray]) -> SimilarityReport:
    """
    Mean over samples of ``|cos(z_i(x), z_j(x))|`` for every pair of seed runs.

    Samples where either latent vector has zero norm are skipped and counted.

    :param latents: one M x r matrix per seed, rows encoding the same samples.
    :raises HromDomainError: fewer than two runs, or a pair without any usable sample.
    """

    if len(latents) < 2:
        raise HromDomainError(f"similarity needs at least two runs, got {len(latents)}")
    latents = [as_matrix(z, "latent") for z in latents]
    if any(z.shape != latents[0].shape for z in latents):
        raise HromValidationError("latent sets differ in shape")

    report = SimilarityReport({})
    norms = [np.linalg.norm(z, axis=1) for z in latents]
    for i, j in itertools.combinations(range(len(latents)), 2):
        usable = (norms[i] > 0) & (norms[j] > 0)
        report.skipped += int(np.count_nonzero(~usable))
        if not usable.any():
            raise HromDomainError(f"runs {i} and {j} share no sample with non-zero latents")
        dots = np.abs(np.sum(latents[i][usable] * latents[j][usable], axis=1))
        report.pairs[(i, j)] = float(np.mean(dots / (norms[i][usable] * norms[j][usable])))
    return report
