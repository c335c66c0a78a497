import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from aenum import Enum, MultiValue, skip

from pyhrom.container import HromContainer
from pyhrom.datasets.burgers import TEST_RE, TRAIN_RE, BurgersConfig, generate_burgers
from pyhrom.datasets.ks import KSConfig, generate_ks
from pyhrom.datasets.snapshots import ByParameter, SnapshotMatrix, standardize
from pyhrom.datasets.wave import WaveConfig, generate_wave
from pyhrom.evaluation import MetricReport, SharpnessConfig, contribution_split, estimate_sharpness, l2_error, \
    latent_cosine_similarity, noise_robustness_sweep
from pyhrom.exceptions import HromConfigError, HromError, HromFormatError
from pyhrom.models.hybrid import ArchConfig, HybridAutoencoder, Variant
from pyhrom.models.koopman import KoopmanConfig, build_koopman, frequency_error, train_koopman
from pyhrom.models.lstm import build_lstm
from pyhrom.numerics import RandomStream
from pyhrom.results import LATENTS_DIR, ResultTable, config_hash
from pyhrom.surrogate import LSTMConfig, build_windows, encode_trajectories, surrogate_errors, train_lstm, \
    write_latent_csv
from pyhrom.training import TrainConfig, TrainReport, ensemble_train

log = logging.getLogger(__name__)


class _KindConfig(NamedTuple):
    needs_ranks: bool
    min_seeds: int


class ExperimentKind(Enum):
    _init_ = 'id fullname config'
    _settings_ = MultiValue

    RECONSTRUCTION = 0, 'reconstruction', skip(_KindConfig(needs_ranks=True, min_seeds=1))
    KOOPMAN = 1, 'koopman', skip(_KindConfig(needs_ranks=False, min_seeds=1))
    SURROGATE = 2, 'surrogate', skip(_KindConfig(needs_ranks=True, min_seeds=1))
    SHARPNESS = 3, 'sharpness', skip(_KindConfig(needs_ranks=True, min_seeds=1))
    NOISE = 4, 'noise', skip(_KindConfig(needs_ranks=True, min_seeds=1))
    CONTRIBUTION = 5, 'contribution', skip(_KindConfig(needs_ranks=True, min_seeds=1))
    SIMILARITY = 6, 'similarity', skip(_KindConfig(needs_ranks=True, min_seeds=2))

    @property
    def needs_ranks(self) -> bool:
        return self.config.value.needs_ranks

    @property
    def min_seeds(self) -> int:
        return self.config.value.min_seeds

    def __int__(self):
        return self.id

    def __str__(self):
        return self.fullname

    def __repr__(self):
        return f'<{self.__class__.__name__}.{self.fullname}: {self.id}>'


def _check_keys(document: dict, allowed, section: str) -> None:
    for key in document:
        if key not in allowed:
            raise HromConfigError(f"unknown key '{key}'", field=f'{section}.{key}' if section else key)


def _section(cls, document, section: str):
    """ Builds the dataclass ``cls`` from a JSON object, reporting errors with their dotted field path. """

    if document is None:
        return cls()
    if not isinstance(document, dict):
        raise HromConfigError(f"'{section}' must be an object", field=section)
    _check_keys(document, {f.name for f in fields(cls)}, section)
    try:
        return cls(**document)
    except HromConfigError as e:
        raise HromConfigError(str(e), field=f'{section}.{e.field}' if e.field else section)
    except (TypeError, ValueError) as e:
        raise HromConfigError(f"invalid '{section}': {e}", field=section)


_GENERATOR_KEYS = {
    'ks': {f.name for f in fields(KSConfig)},
    'burgers': {'train_re', 'test_re', 'nx', 'nt', 'T'},
    'wave': {f.name for f in fields(WaveConfig)} | {'train_fraction'},
}


def _check_reynolds(train_re, test_re) -> None:
    for name, values in (('train_re', train_re), ('test_re', test_re)):
        if not isinstance(values, (list, tuple)) or not values:
            raise HromConfigError(f"'{name}' must be a non-empty list", field=f'params.{name}')
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v) or v <= 0
               for v in values):
            raise HromConfigError(f"'{name}' must hold positive Reynolds numbers", field=f'params.{name}')
    try:
        ByParameter(tuple(float(v) for v in train_re), tuple(float(v) for v in test_re))
    except HromConfigError as e:
        raise HromConfigError(str(e), field='params.test_re')


_STANDARDIZED_BY_DEFAULT = {'ks': True, 'burgers': False, 'wave': False}


@dataclass
class DatasetSpec:
    """ Either a snapshot container ``path`` or a ``generator`` name with its ``params``. """

    generator: Optional[str] = None
    path: Optional[str] = None
    params: dict = field(default_factory=dict)
    standardize: Optional[bool] = None

    @classmethod
    def from_dict(cls, document: dict) -> 'DatasetSpec':
        return _section(cls, document, 'dataset')

    def __post_init__(self):
        if (self.generator is None) == (self.path is None):
            raise HromConfigError("give exactly one of 'generator' and 'path'", field='generator')
        if self.path is not None:
            if not os.path.isfile(self.path):
                raise HromConfigError(f"dataset file '{self.path}' does not exist", field='path')
            return
        if self.generator not in _GENERATOR_KEYS:
            raise HromConfigError(f"unknown generator '{self.generator}'", field='generator')
        if not isinstance(self.params, dict):
            raise HromConfigError("'params' must be an object", field='params')
        _check_keys(self.params, _GENERATOR_KEYS[self.generator], 'params')
        if self.generator == 'ks':
            _section(KSConfig, self.params, 'params')
        elif self.generator == 'burgers':
            _section(BurgersConfig, {k: v for k, v in self.params.items() if k not in ('train_re', 'test_re')},
                     'params')
            _check_reynolds(self.params.get('train_re', TRAIN_RE), self.params.get('test_re', TEST_RE))
        elif self.generator == 'wave':
            _section(WaveConfig, {k: v for k, v in self.params.items() if k != 'train_fraction'}, 'params')

    @property
    def standardized(self) -> bool:
        if self.standardize is not None:
            return bool(self.standardize)
        return _STANDARDIZED_BY_DEFAULT.get(self.generator, False)

    def build(self) -> SnapshotMatrix:
        if self.path is not None:
            data = HromContainer.load(self.path)
            if not isinstance(data, SnapshotMatrix):
                raise HromFormatError(f"{self.path} holds a '{data.kind}' container, not snapshots")
        elif self.generator == 'ks':
            data = generate_ks(KSConfig(**self.params))
        elif self.generator == 'burgers':
            params = dict(self.params)
            data = generate_burgers(params.pop('train_re', TRAIN_RE), params.pop('test_re', TEST_RE), **params)
        else:
            params = dict(self.params)
            data = generate_wave(WaveConfig(**{k: v for k, v in params.items() if k != 'train_fraction'}),
                                 params.get('train_fraction', 0.5))

        if self.standardized and not data.standardized:
            data = standardize(data)
        return data

    def reference_frequencies(self) -> Optional[List[float]]:
        if self.generator == 'wave':
            return [WaveConfig(**{k: v for k, v in self.params.items() if k != 'train_fraction'}).omega]
        return None


@dataclass
class ExperimentConfig:
    """
    One experiment: what to run, on which data, for which variants, ranks and seeds.

    ``out`` does not take part in the config hash, so the same experiment written to two directories yields
    the same hash.
    """

    kind: ExperimentKind
    dataset: DatasetSpec
    variants: List[Variant] = field(default_factory=lambda: list(Variant))
    ranks: List[int] = field(default_factory=list)
    seeds: List[int] = field(default_factory=lambda: [0])
    arch: ArchConfig = field(default_factory=ArchConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    koopman: KoopmanConfig = field(default_factory=KoopmanConfig)
    lstm: LSTMConfig = field(default_factory=LSTMConfig)
    sharpness: SharpnessConfig = field(default_factory=SharpnessConfig)
    noise_levels: List[float] = field(default_factory=lambda: [0.1, 0.2, 0.3])
    noise_target: str = 'clean'
    reference_frequencies: Optional[List[float]] = None
    out: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.seeds, list) or not self.seeds:
            raise HromConfigError("the seed list must not be empty", field='seeds')
        if any(isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in self.seeds):
            raise HromConfigError("seeds must be non-negative integers", field='seeds')
        if len(self.seeds) < self.kind.min_seeds:
            raise HromConfigError(f"{self.kind} needs at least {self.kind.min_seeds} seeds", field='seeds')
        if self.kind.needs_ranks:
            if not self.ranks:
                raise HromConfigError(f"{self.kind} needs a non-empty rank list", field='ranks')
            if any(isinstance(r, bool) or not isinstance(r, int) or r < 1 for r in self.ranks):
                raise HromConfigError("ranks must be positive integers", field='ranks')
        if not self.variants:
            raise HromConfigError("the variant list must not be empty", field='variants')
        if self.kind is ExperimentKind.CONTRIBUTION and Variant.LWH not in self.variants:
            raise HromConfigError(f"a contribution experiment needs the {Variant.LWH} variant", field='variants')
        if any(level < 0 for level in self.noise_levels):
            raise HromConfigError("noise levels must be non-negative", field='noise_levels')
        if self.noise_target not in ('clean', 'noisy'):
            raise HromConfigError(f"unknown noise target '{self.noise_target}'", field='noise_target')

    @classmethod
    def from_dict(cls, document: dict) -> 'ExperimentConfig':
        """
        :raises HromConfigError: unknown keys, wrong types or invalid values, naming the offending field.
        """

        if not isinstance(document, dict):
            raise HromConfigError("an experiment config must be a JSON object")
        _check_keys(document, {f.name for f in fields(cls)}, '')
        if 'kind' not in document or 'dataset' not in document:
            raise HromConfigError("'kind' and 'dataset' are required", field='kind' if 'kind' not in document
                                  else 'dataset')
        try:
            kind = ExperimentKind(document['kind'])
        except ValueError:
            raise HromConfigError(f"unknown experiment kind '{document['kind']}'", field='kind')

        variants = document.get('variants', [str(v) for v in Variant])
        if not isinstance(variants, list):
            raise HromConfigError("'variants' must be a list", field='variants')

        try:
            return cls(kind=kind,
                       dataset=_section(DatasetSpec, document['dataset'], 'dataset'),
                       variants=[Variant.parse(v) for v in variants],
                       ranks=list(document.get('ranks', [])),
                       seeds=list(document.get('seeds', [0])),
                       arch=_section(ArchConfig, document.get('arch'), 'arch'),
                       train=_section(TrainConfig, document.get('train'), 'train'),
                       koopman=_section(KoopmanConfig, document.get('koopman'), 'koopman'),
                       lstm=_section(LSTMConfig, document.get('lstm'), 'lstm'),
                       sharpness=_section(SharpnessConfig, document.get('sharpness'), 'sharpness'),
                       noise_levels=[float(v) for v in document.get('noise_levels', [0.1, 0.2, 0.3])],
                       noise_target=document.get('noise_target', 'clean'),
                       reference_frequencies=document.get('reference_frequencies'),
                       out=document.get('out'))
        except HromConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise HromConfigError(f"invalid value: {e}")

    @classmethod
    def from_file(cls, path: str) -> 'ExperimentConfig':
        try:
            with open(path, encoding='utf-8') as f:
                document = json.load(f)
        except json.JSONDecodeError as e:
            raise HromConfigError(f"{path}: not valid JSON ({e})")
        return cls.from_dict(document)

    def with_seed_offset(self, offset: int) -> 'ExperimentConfig':
        return replace(self, seeds=[s + offset for s in self.seeds]) if offset else self

    def to_dict(self) -> dict:
        """ Normalised document, every default filled in; the input of the config hash. """

        return {'kind': str(self.kind),
                'dataset': asdict(self.dataset),
                'variants': [str(v) for v in self.variants],
                'ranks': list(self.ranks),
                'seeds': list(self.seeds),
                'arch': asdict(self.arch),
                'train': asdict(self.train),
                'koopman': asdict(self.koopman),
                'lstm': asdict(self.lstm),
                'sharpness': asdict(self.sharpness),
                'noise_levels': list(self.noise_levels),
                'noise_target': self.noise_target,
                'reference_frequencies': self.reference_frequencies}

    @property
    def config_hash(self) -> str:
        return config_hash(self.to_dict())


# Runners

TrainedModels = Dict[Tuple[Variant, int, int], Tuple[TrainReport, HybridAutoencoder]]


def _save(out: Optional[str], name: str, blob: bytes) -> None:
    if out is None:
        return
    directory = os.path.join(out, 'checkpoints')
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, name), 'wb') as f:
        f.write(blob)


def _train_autoencoders(config: ExperimentConfig, data: SnapshotMatrix, workers: int,
                        out: Optional[str]) -> TrainedModels:
    models = {}
    for variant in config.variants:
        checkpoints = {}
        result = ensemble_train(variant, data, config.ranks, len(config.seeds), config.train, config.arch, workers,
                                checkpoints=checkpoints, seeds=config.seeds)
        for (rank, seed), report in result.reports.items():
            blob = checkpoints[(rank, seed)]
            _save(out, f'{variant}-r{rank}-s{seed}.hrom', blob)
            models[(variant, rank, seed)] = (report, HromContainer.from_bytes(blob))
    return models


def _training_rows(reports, grid: int) -> List[dict]:
    rows = []
    for report in reports:
        rows.extend(report.to_frame(grid).to_dict('records'))
    return rows


def run_reconstruction(config: ExperimentConfig, data: SnapshotMatrix, workers: int = 1,
                       out: Optional[str] = None) -> List[ResultTable]:
    models = _train_autoencoders(config, data, workers, out)
    table = ResultTable('reconstruction')
    for (variant, rank, seed), (report, _) in models.items():
        table.add({'variant': str(variant), 'grid': data.N, 'rank': rank, 'seed': seed,
                   'train_error': report.final_train, 'test_error': report.final_test,
                   'best_epoch': report.best_epoch, 'best_train_error': report.best_train,
                   'best_test_error': report.best_test, 'wall_ms': report.mean_wall_ms})
    training = ResultTable('training', _training_rows([r for r, _ in models.values()], data.N))
    return [table, training]


def run_koopman(config: ExperimentConfig, data: SnapshotMatrix, workers: int = 1,
                out: Optional[str] = None) -> List[ResultTable]:
    reference = config.reference_frequencies or config.dataset.reference_frequencies()
    table = ResultTable('koopman')
    reports = []
    for variant in config.variants:
        for seed in config.seeds:
            try:
                model = build_koopman(variant, data, config.koopman.n_frequencies, config.arch,
                                      RandomStream(seed).child(0), config.koopman.dt)
                model, report = train_koopman(model, data, replace(config.koopman, seed=seed))
            except HromError as e:
                log.warning("koopman %s seed %d failed: %s", variant, seed, e)
                continue

            omega = np.sort(np.abs(model.omega.value))
            row = {'variant': str(variant), 'n_frequencies': model.n_frequencies, 'seed': seed,
                   'omega': float(omega[0]),
                   'frequency_error': frequency_error(model, reference) if reference and len(reference) == omega.size
                   else float('nan'),
                   'train_error': report.final_train, 'test_error': report.final_test}
            row.update({f'omega_{j}': float(w) for j, w in enumerate(omega[1:], start=1)})
            table.add(row)
            reports.append(report)
            _save(out, f'koopman-{variant}-s{seed}.hrom', model.to_bytes())
    return [table, ResultTable('training', _training_rows(reports, data.N))]


def run_surrogate(config: ExperimentConfig, data: SnapshotMatrix, workers: int = 1,
                  out: Optional[str] = None) -> List[ResultTable]:
    models = _train_autoencoders(config, data, workers, out)
    table = ResultTable('surrogate')
    for (variant, rank, seed), (_, model) in models.items():
        series = encode_trajectories(model, data, data.train_idx)
        windows, targets = build_windows(series, config.lstm.k)
        net = build_lstm(series.values.shape[1], rank, config.lstm.hidden, config.lstm.k,
                         RandomStream(seed).child(2))
        net, _ = train_lstm(net, windows, targets, replace(config.lstm, seed=seed))
        _save(out, f'lstm-{variant}-r{rank}-s{seed}.hrom', net.to_bytes())
        if out is not None:
            os.makedirs(os.path.join(out, LATENTS_DIR), exist_ok=True)
            write_latent_csv(series, os.path.join(out, LATENTS_DIR, f'{variant}-r{rank}-s{seed}.csv'))

        for error in surrogate_errors(model, net, data):
            table.add({'variant': str(variant), 'rank': rank, 'trajectory': error.trajectory,
                       'param': error.params[0] if error.params else float('nan'),
                       'total_error': error.total, 'reconstruction_error': error.reconstruction,
                       'lstm_error': error.lstm, 'seed': seed})
    return [table]


def run_sharpness(config: ExperimentConfig, data: SnapshotMatrix, workers: int = 1,
                  out: Optional[str] = None) -> List[ResultTable]:
    table = ResultTable('sharpness')
    for (variant, rank, seed), (_, model) in _train_autoencoders(config, data, workers, out).items():
        table.add(MetricReport('test_l2', l2_error(model, data.test), 0.0, str(variant), data.N, rank, seed).as_row())
        report = estimate_sharpness(model, data, replace(config.sharpness, seed=seed))
        report.seed = seed
        table.add(report.as_row())
    return [table]


def run_noise(config: ExperimentConfig, data: SnapshotMatrix, workers: int = 1,
              out: Optional[str] = None) -> List[ResultTable]:
    levels = [0.0] + [level for level in config.noise_levels if level != 0.0]
    table = ResultTable('noise')
    for (variant, rank, seed), (_, model) in _train_autoencoders(config, data, workers, out).items():
        for report in noise_robustness_sweep(model, data, levels, RandomStream(seed).child(3), config.noise_target):
            report.seed = seed
            table.add(report.as_row())
    return [table]


def run_contribution(config: ExperimentConfig, data: SnapshotMatrix, workers: int = 1,
                     out: Optional[str] = None) -> List[ResultTable]:
    config = replace(config, variants=[Variant.LWH])
    table = ResultTable('contribution')
    for (variant, rank, seed), (_, model) in _train_autoencoders(config, data, workers, out).items():
        split = contribution_split(model, data.test)
        for metric, value, flags in (('latent_pod_share', split.latent_pod, split.latent_degenerate),
                                     ('latent_nn_share', split.latent_nn, split.latent_degenerate),
                                     ('reconstruction_pod_share', split.reconstruction_pod,
                                      split.reconstruction_degenerate),
                                     ('reconstruction_nn_share', split.reconstruction_nn,
                                      split.reconstruction_degenerate)):
            table.add(MetricReport(metric, value, 0.0, str(variant), data.N, rank, seed,
                                   extra={'degenerate': flags, 'convention': split.convention}).as_row())
    return [table]


def run_similarity(config: ExperimentConfig, data: SnapshotMatrix, workers: int = 1,
                   out: Optional[str] = None) -> List[ResultTable]:
    models = _train_autoencoders(config, data, workers, out)
    table = ResultTable('similarity')
    for variant in config.variants:
        for rank in config.ranks:
            seeds = [s for s in config.seeds if (variant, rank, s) in models]
            if len(seeds) < 2:
                log.warning("%s rank %d: fewer than two trained seeds, similarity skipped", variant, rank)
                continue
            latents = [models[(variant, rank, s)][1].encode(data.test).value for s in seeds]
            report = latent_cosine_similarity(latents)
            for (i, j), score in report.pairs.items():
                table.add(MetricReport('latent_cosine', score, 0.0, str(variant), data.N, rank,
                                       extra={'seed_a': seeds[i], 'seed_b': seeds[j]}).as_row())
            table.add(MetricReport('latent_cosine_mean', report.mean, report.std, str(variant), data.N, rank,
                                   extra={'skipped': report.skipped}).as_row())
    return [table]


RUNNERS: Dict[ExperimentKind, Callable[..., List[ResultTable]]] = {
    ExperimentKind.RECONSTRUCTION: run_reconstruction,
    ExperimentKind.KOOPMAN: run_koopman,
    ExperimentKind.SURROGATE: run_surrogate,
    ExperimentKind.SHARPNESS: run_sharpness,
    ExperimentKind.NOISE: run_noise,
    ExperimentKind.CONTRIBUTION: run_contribution,
    ExperimentKind.SIMILARITY: run_similarity,
}


def run_experiment(config: ExperimentConfig, out: Optional[str] = None, workers: int = 1,
                   version: str = '') -> List[ResultTable]:
    """
    Generates or loads the dataset, runs the experiment kind and, when ``out`` is given, writes every table
    with its provenance.
    """

    started = datetime.now(timezone.utc).isoformat()
    data = config.dataset.build()
    log.info("running %s experiment %s on %r", config.kind, config.config_hash[:12], data)

    tables = RUNNERS[config.kind](config, data, workers, out)
    document = config.to_dict()
    for table in tables:
        table.config = document
        if out is not None:
            table.write(out, version, started)
    return tables
