import logging
from typing import Union

import numpy as np

from pyhrom.datasets.snapshots import SnapshotMatrix
from pyhrom.exceptions import HromDomainError, HromValidationError
from pyhrom.numerics import as_matrix, tail_energy, thin_svd

log = logging.getLogger(__name__)


class PODBasis:
    """
    Leading left singular vectors ``Ur`` (N*Q x r) of the transposed training snapshot matrix.

    ``encode(x) = x Ur`` and ``decode(z) = z Ur^T``, so ``decode(encode(x))`` is the orthogonal projection onto
    ``span(Ur)``. ``singular_values`` keeps the whole spectrum of the training data for tail-energy checks.
    """

    def __init__(self, Ur, singular_values, mean=None, std=None):
        self._ur = as_matrix(Ur, "Ur")
        self._s = np.asarray(singular_values, dtype=np.float64)
        features = self._ur.shape[0]
        self.mean = np.zeros(features) if mean is None else np.asarray(mean, dtype=np.float64)
        self.std = np.ones(features) if std is None else np.asarray(std, dtype=np.float64)

    @property
    def Ur(self) -> np.ndarray:
        return self._ur

    @property
    def r(self) -> int:
        return self._ur.shape[1]

    @property
    def features(self) -> int:
        return self._ur.shape[0]

    @property
    def singular_values(self) -> np.ndarray:
        return self._s

    def tail_energy(self) -> float:
        return tail_energy(self._s, self.r)

    def encode(self, x) -> np.ndarray:
        x = as_matrix(x, "x")
        if x.shape[1] != self.features:
            raise HromValidationError(f"expected {self.features} features, got {x.shape[1]}")
        return x @ self._ur

    def decode(self, z) -> np.ndarray:
        z = as_matrix(z, "z")
        if z.shape[1] != self.r:
            raise HromValidationError(f"expected a latent of size {self.r}, got {z.shape[1]}")
        return z @ self._ur.T

    def project(self, x) -> np.ndarray:
        return self.decode(self.encode(x))

    def __repr__(self):
        return f'<PODBasis: features={self.features}, r={self.r}>'


def compute_pod(snapshots: Union[SnapshotMatrix, np.ndarray], r: int) -> PODBasis:
    """
    POD basis of rank ``r`` from the training rows.

    :param snapshots: a (standardized) snapshot matrix, whose train split is used, or a plain M x F array.
    :param r: rank, 1 <= r <= min(M, F).
    :raises HromDomainError: r out of range.
    """

    if isinstance(snapshots, SnapshotMatrix):
        x, mean, std = snapshots.train, snapshots.mean, snapshots.std
        if not snapshots.standardized:
            log.debug("computing a POD basis from data that is not standardized")
    else:
        x, mean, std = as_matrix(snapshots, "snapshots"), None, None

    m, features = x.shape
    if isinstance(r, bool) or not isinstance(r, (int, np.integer)) or not 1 <= r <= min(m, features):
        raise HromDomainError(f"rank must lie in [1, {min(m, features)}], got {r}")

    u, s, _ = thin_svd(x.T, min(m, features))
    return PODBasis(u[:, :r], s, mean, std)
