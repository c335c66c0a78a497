"""
Dense linear algebra and seeded randomness shared by every other module.

Matrices are plain ``numpy`` arrays of 64-bit floats in row-major (C) order. The helpers below validate
them on the way in, so callers can rely on finite, two-dimensional ``float64`` data afterwards.
"""

from typing import NamedTuple, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la

from pyhrom.exceptions import HromDomainError, HromValidationError

DenseMatrix = np.ndarray

Shape = Union[int, Tuple[int, ...], None]


def as_matrix(values, name: str = "matrix") -> DenseMatrix:
    """
    Converts ``values`` into a finite, two-dimensional float64 array.

    :param values: anything ``numpy.asarray`` accepts; one-dimensional input becomes a single row.
    :param name: used in error messages.
    :raises HromValidationError: when the data has more than two dimensions or contains NaN/Inf.
    :returns: a C-contiguous float64 array (a copy only when a conversion was needed).
    """

    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise HromValidationError(f"{name} must be two-dimensional, got {arr.ndim} dimensions")
    check_finite(arr, name)
    return arr


def check_finite(arr: np.ndarray, name: str = "array") -> None:
    if not np.all(np.isfinite(arr)):
        raise HromValidationError(f"{name} contains non-finite entries")


class SVDResult(NamedTuple):
    U: DenseMatrix
    S: np.ndarray
    Vt: DenseMatrix


def thin_svd(a: DenseMatrix, k: int) -> SVDResult:
    """
    Top-k singular triplets of ``a``.

    The decomposition uses LAPACK's ``gesvd`` driver (Householder bidiagonalisation followed by implicit
    QR on the bidiagonal), so the result is deterministic for a fixed input. Each column of ``U`` is
    flipped so that its largest-magnitude entry is positive, and the matching row of ``Vt`` with it.

    :param a: m x n matrix.
    :param k: number of triplets, 1 <= k <= min(m, n).
    :raises HromDomainError: k out of range.
    :raises HromValidationError: non-finite input.
    """

    a = as_matrix(a, "A")
    m, n = a.shape
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or not 1 <= k <= min(m, n):
        raise HromDomainError(f"k must lie in [1, {min(m, n)}], got {k}")

    u, s, vt = la.svd(a, full_matrices=False, lapack_driver='gesvd', check_finite=False)
    u, s, vt = u[:, :k].copy(), s[:k].copy(), vt[:k].copy()

    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(k)])
    signs[signs == 0] = 1.0
    u *= signs
    vt *= signs[:, None]

    return SVDResult(u, s, vt)


def frobenius_norm(a: DenseMatrix) -> float:
    a = np.asarray(a, dtype=np.float64)
    check_finite(a, "A")
    return float(np.sqrt(np.sum(a * a)))


def tail_energy(singular_values: Sequence[float], r: int) -> float:
    """ Sum of squared singular values beyond the first ``r``. """

    s = np.asarray(singular_values, dtype=np.float64)
    return float(np.sum(s[r:] ** 2))


class RandomStream:
    """
    Seeded pseudo-random stream (PCG64).

    A stream is single-owner. Parallel workers never share one; they derive children with
    :meth:`child`, whose seed depends only on the parent seed and the worker index.
    """

    def __init__(self, seed: int = 0, spawn_key: Tuple[int, ...] = ()):
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
            raise TypeError("seed should be of type 'int'")
        if not 0 <= int(seed) < 2 ** 64:
            raise HromDomainError(f"seed must be a 64-bit unsigned integer, got {seed}")

        self._seed = int(seed)
        self._spawn_key = tuple(int(i) for i in spawn_key)
        self._generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self._seed,
                                                                                       spawn_key=self._spawn_key)))

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def spawn_key(self) -> Tuple[int, ...]:
        return self._spawn_key

    def child(self, index: int) -> 'RandomStream':
        return RandomStream(self._seed, self._spawn_key + (int(index),))

    def uniform(self, low: float = 0.0, high: float = 1.0, size: Shape = None) -> np.ndarray:
        return self._generator.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size: Shape = None) -> np.ndarray:
        return self._generator.normal(loc, scale, size)

    def integers(self, low: int, high: int, size: Shape = None) -> np.ndarray:
        """ Integers drawn uniformly from the closed range [low, high]. """

        return self._generator.integers(low, high, size, endpoint=True)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)

    def unit_vector(self, n: int) -> np.ndarray:
        v = self._generator.standard_normal(n)
        norm = np.linalg.norm(v)
        while norm == 0.0:
            v = self._generator.standard_normal(n)
            norm = np.linalg.norm(v)
        return v / norm

    def __repr__(self):
        return f'<RandomStream: seed={self._seed}, spawn_key={self._spawn_key}>'


def child_seed(seed: int, index: int) -> int:
    """ Deterministic 64-bit seed for worker ``index`` derived from ``seed``. """

    state = np.random.SeedSequence(int(seed), spawn_key=(int(index),)).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def orthonormal_columns(stream: RandomStream, rows: int, cols: int) -> DenseMatrix:
    """ Random matrix with orthonormal columns (QR of a Gaussian draw). """

    q, r = np.linalg.qr(stream.normal(size=(rows, cols)))
    return q * np.sign(np.diag(r))
