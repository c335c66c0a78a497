import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from pyhrom.container import HromContainer, TensorEntry
from pyhrom.exceptions import HromConfigError, HromDomainError, HromFormatError, HromValidationError
from pyhrom.numerics import RandomStream, as_matrix

log = logging.getLogger(__name__)

STD_THRESHOLD = 1e-12

CSV_FLOAT_FORMAT = '%.17g'


@HromContainer.record_kind('snapshots')
class SnapshotMatrix(HromContainer):
    """
    M samples by N*Q flattened features, cell-major (feature ``cell * Q + component``).

    Optional per-row metadata: control parameters (M x p, e.g. Re), trajectory ids and times. ``mean``/``std``
    hold the standardization statistics; when ``standardized`` is False they are only carried along.
    """

    def __init__(self,
                 data,
                 n_components: int = 1,
                 train_idx: Optional[Sequence[int]] = None,
                 test_idx: Optional[Sequence[int]] = None,
                 params=None,
                 trajectory: Optional[Sequence[int]] = None,
                 times: Optional[Sequence[float]] = None,
                 mean=None,
                 std=None,
                 standardized: bool = False,
                 meta: Optional[dict] = None):
        self._data = as_matrix(data, "snapshot data")
        m, features = self._data.shape

        if n_components < 1 or features % n_components:
            raise HromValidationError(f"{features} features cannot be split into cells of {n_components} components")
        self._q = int(n_components)

        self.train_idx = np.arange(m) if train_idx is None else np.asarray(train_idx, dtype=np.int64)
        self.test_idx = np.zeros(0, dtype=np.int64) if test_idx is None else np.asarray(test_idx, dtype=np.int64)
        if np.intersect1d(self.train_idx, self.test_idx).size:
            raise HromValidationError("train and test indices overlap")

        self.params = None if params is None else as_matrix(np.asarray(params, dtype=np.float64).reshape(m, -1),
                                                            "params")
        self.trajectory = None if trajectory is None else np.asarray(trajectory, dtype=np.int64).reshape(m)
        self.times = None if times is None else np.asarray(times, dtype=np.float64).reshape(m)

        self.mean = np.zeros(features) if mean is None else np.asarray(mean, dtype=np.float64).reshape(features)
        self.std = np.ones(features) if std is None else np.asarray(std, dtype=np.float64).reshape(features)
        self.standardized = bool(standardized)
        self.meta = dict(meta) if meta else {}

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def M(self) -> int:
        return self._data.shape[0]

    @property
    def N(self) -> int:
        return self._data.shape[1] // self._q

    @property
    def Q(self) -> int:
        return self._q

    @property
    def features(self) -> int:
        return self._data.shape[1]

    @property
    def train(self) -> np.ndarray:
        return self._data[self.train_idx]

    @property
    def test(self) -> np.ndarray:
        return self._data[self.test_idx]

    def replace(self, **kwargs) -> 'SnapshotMatrix':
        fields = dict(data=self._data.copy(), n_components=self._q, train_idx=self.train_idx.copy(),
                      test_idx=self.test_idx.copy(), params=None if self.params is None else self.params.copy(),
                      trajectory=None if self.trajectory is None else self.trajectory.copy(),
                      times=None if self.times is None else self.times.copy(), mean=self.mean.copy(),
                      std=self.std.copy(), standardized=self.standardized, meta=dict(self.meta))
        fields.update(kwargs)
        return SnapshotMatrix(**fields)

    def subset(self, rows: Sequence[int]) -> 'SnapshotMatrix':
        """ Rows ``rows`` as a new matrix whose train split is all of them. """

        rows = np.asarray(rows, dtype=np.int64)
        return self.replace(data=self._data[rows],
                            train_idx=np.arange(rows.size),
                            test_idx=np.zeros(0, dtype=np.int64),
                            params=None if self.params is None else self.params[rows],
                            trajectory=None if self.trajectory is None else self.trajectory[rows],
                            times=None if self.times is None else self.times[rows])

    def physical(self, values: Optional[np.ndarray] = None) -> np.ndarray:
        """ ``values`` (default: the data) mapped back to physical units. """

        values = self._data if values is None else values
        return values * self.std + self.mean if self.standardized else values

    @classmethod
    def from_parts(cls, meta: dict, tensors: 'OrderedDict[str, TensorEntry]') -> 'SnapshotMatrix':
        def optional(name):
            return tensors[name][0] if name in tensors else None

        try:
            return cls(data=tensors['data'][0],
                       n_components=meta['Q'],
                       train_idx=tensors['train_idx'][0].astype(np.int64),
                       test_idx=tensors['test_idx'][0].astype(np.int64),
                       params=optional('params'),
                       trajectory=None if 'trajectory' not in tensors else tensors['trajectory'][0].astype(np.int64),
                       times=optional('times'),
                       mean=tensors['mean'][0],
                       std=tensors['std'][0],
                       standardized=meta['standardized'],
                       meta=meta['generator'])
        except KeyError as e:
            raise HromFormatError(f"snapshot container misses {e}")

    def _container_meta(self) -> dict:
        return {'N': self.N, 'Q': self._q, 'M': self.M, 'standardized': self.standardized, 'generator': self.meta}

    def _container_tensors(self) -> 'OrderedDict[str, TensorEntry]':
        tensors = OrderedDict()
        tensors['data'] = (self._data, 'data')
        tensors['mean'] = (self.mean, 'stats')
        tensors['std'] = (self.std, 'stats')
        tensors['train_idx'] = (self.train_idx.astype(np.float64), 'index')
        tensors['test_idx'] = (self.test_idx.astype(np.float64), 'index')
        if self.params is not None:
            tensors['params'] = (self.params, 'params')
        if self.trajectory is not None:
            tensors['trajectory'] = (self.trajectory.astype(np.float64), 'index')
        if self.times is not None:
            tensors['times'] = (self.times, 'time')
        return tensors

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self._data, columns=[f'x{i}' for i in range(self.features)])
        if self.params is not None:
            for j in reversed(range(self.params.shape[1])):
                frame.insert(0, f'param{j}', self.params[:, j])
        if self.times is not None:
            frame.insert(0, 'time', self.times)
        if self.trajectory is not None:
            frame.insert(0, 'trajectory', self.trajectory)
        return frame

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, encoding='utf-8')

    @classmethod
    def from_csv(cls, path: str, n_components: int = 1) -> 'SnapshotMatrix':
        frame = pd.read_csv(path, encoding='utf-8', float_precision='round_trip')
        feature_cols = [c for c in frame.columns if c.startswith('x')]
        param_cols = [c for c in frame.columns if c.startswith('param')]
        if not feature_cols:
            raise HromFormatError(f"{path}: no feature columns")
        return cls(frame[feature_cols].to_numpy(dtype=np.float64),
                   n_components=n_components,
                   params=frame[param_cols].to_numpy(dtype=np.float64) if param_cols else None,
                   trajectory=frame['trajectory'].to_numpy() if 'trajectory' in frame else None,
                   times=frame['time'].to_numpy(dtype=np.float64) if 'time' in frame else None)

    def __repr__(self):
        return f'<SnapshotMatrix: M={self.M}, N={self.N}, Q={self.Q}, train={self.train_idx.size}, ' \
               f'test={self.test_idx.size}, standardized={self.standardized}>'


def standardize(snapshots: SnapshotMatrix) -> SnapshotMatrix:
    """
    Per-feature standardization with statistics of the train split, applied to every row.

    Features whose train std is below 1e-12 are only centered.

    :raises HromDomainError: empty train split.
    """

    if snapshots.standardized:
        return snapshots.replace()
    if snapshots.train_idx.size == 0:
        raise HromDomainError("cannot standardize with an empty train split")

    train = snapshots.train
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std = np.where(std < STD_THRESHOLD, 1.0, std)

    return snapshots.replace(data=(snapshots.data - mean) / std, mean=mean, std=std, standardized=True)


def destandardize(snapshots: SnapshotMatrix) -> SnapshotMatrix:
    if not snapshots.standardized:
        return snapshots.replace()
    return snapshots.replace(data=snapshots.physical(), standardized=False)


@dataclass(frozen=True)
class ShuffledRatio:
    ratio: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise HromConfigError(f"split ratio must lie in (0, 1), got {self.ratio}", field='ratio')


@dataclass(frozen=True)
class ByParameter:
    train_values: Tuple[float, ...]
    test_values: Tuple[float, ...]
    column: int = 0

    def __post_init__(self):
        overlap = set(self.train_values) & set(self.test_values)
        if overlap:
            raise HromConfigError(f"train and test parameter sets overlap: {sorted(overlap)}", field='test_values')


@dataclass(frozen=True)
class ByTime:
    fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise HromConfigError(f"time fraction must lie in (0, 1), got {self.fraction}", field='fraction')


SplitPolicy = Union[ShuffledRatio, ByParameter, ByTime]


def split_dataset(snapshots: Union[SnapshotMatrix, int], policy: SplitPolicy) -> Tuple[np.ndarray, np.ndarray]:
    """
    Train/test row indices.

    :param snapshots: the matrix, or just a row count for the ratio and time policies.
    :param policy: :class:`ShuffledRatio`, :class:`ByParameter` or :class:`ByTime`.
    :returns: sorted, disjoint index arrays.
    """

    m = snapshots if isinstance(snapshots, (int, np.integer)) else snapshots.M

    if isinstance(policy, ShuffledRatio):
        order = RandomStream(policy.seed).permutation(m)
        n_train = int(round(policy.ratio * m))
        return np.sort(order[:n_train]), np.sort(order[n_train:])

    if isinstance(policy, ByTime):
        n_train = int(np.floor(policy.fraction * m))
        return np.arange(n_train), np.arange(n_train, m)

    if isinstance(policy, ByParameter):
        if isinstance(snapshots, (int, np.integer)) or snapshots.params is None:
            raise HromConfigError("a by-parameter split needs per-row parameters", field='policy')
        values = snapshots.params[:, policy.column]
        train = np.flatnonzero(np.isin(values, policy.train_values))
        test = np.flatnonzero(np.isin(values, policy.test_values))
        return train, test

    raise HromConfigError(f"unknown split policy {policy!r}", field='policy')


def add_noise(snapshots: SnapshotMatrix, level: float, stream: RandomStream,
              max_abs: Optional[float] = None) -> SnapshotMatrix:
    """
    Copy of ``snapshots`` with zero-mean normal noise of std ``level * max|u|``.

    ``max|u|`` is taken over the physical (destandardized) values unless given; the noise is then expressed
    in the representation of ``snapshots``.
    """

    if level < 0:
        raise HromDomainError(f"noise level must be non-negative, got {level}")
    if level == 0:
        return snapshots.replace()

    if max_abs is None:
        max_abs = float(np.max(np.abs(snapshots.physical())))
    noise = stream.normal(0.0, level * max_abs, snapshots.data.shape)
    if snapshots.standardized:
        noise = noise / snapshots.std

    return snapshots.replace(data=snapshots.data + noise)
