import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.linalg as la
from pytest import mark

from pyhrom.exceptions import HromDomainError, HromValidationError
from pyhrom.numerics import RandomStream, as_matrix, child_seed, frobenius_norm, orthonormal_columns, tail_energy, \
    thin_svd

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


@mark.numerics
@mark.parametrize("a, expected",
                  [
                      (np.eye(2), [1.0, 1.0]),
                      (np.diag([3.0, -2.0]), [3.0, 2.0]),
                  ], ids=['svd_identity', 'svd_diagonal'])
def test_thin_svd_small(a, expected):
    u, s, vt = thin_svd(a, 2)

    assert s == pytest.approx(expected, abs=1e-14)
    for column in u.T:
        assert np.linalg.norm(column) == pytest.approx(1.0, abs=1e-14)
        assert np.count_nonzero(np.abs(column) > 1e-14) == 1
    assert u @ np.diag(s) @ vt == pytest.approx(a, abs=1e-14)


@mark.numerics
def test_thin_svd_against_eigensolver():
    a = RandomStream(7).normal(size=(6, 4))

    _, s, _ = thin_svd(a, 4)
    eigenvalues = la.eigh(a.T @ a, eigvals_only=True)[::-1]

    assert s == pytest.approx(np.sqrt(eigenvalues), abs=1e-9)


@mark.numerics
def test_thin_svd_invariants():
    a = RandomStream(5).normal(size=(12, 7))
    u, s, vt = thin_svd(a, 7)

    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    assert u.T @ u == pytest.approx(np.eye(7), abs=1e-10)
    assert vt @ vt.T == pytest.approx(np.eye(7), abs=1e-10)
    assert frobenius_norm(a - u @ np.diag(s) @ vt) <= 1e-8 * frobenius_norm(a)

    pivot = np.argmax(np.abs(u), axis=0)
    assert np.all(u[pivot, np.arange(7)] > 0)


@mark.numerics
def test_thin_svd_scaling():
    a = RandomStream(9).normal(size=(8, 5))
    u, s, _ = thin_svd(a, 3)
    u_scaled, s_scaled, _ = thin_svd(3.5 * a, 3)

    assert s_scaled == pytest.approx(3.5 * s, rel=1e-12)
    assert np.abs(u_scaled) == pytest.approx(np.abs(u), abs=1e-10)


@mark.numerics
def test_thin_svd_deterministic():
    a = RandomStream(2).normal(size=(30, 20))
    first, second = thin_svd(a, 10), thin_svd(a.copy(), 10)

    assert all(np.array_equal(x, y) for x, y in zip(first, second))


@mark.numerics
@mark.parametrize("k", [0, 5, -1, 2.0, True], ids=['k_zero', 'k_too_large', 'k_negative', 'k_float', 'k_bool'])
def test_thin_svd_rank_out_of_range(k):
    with pytest.raises(HromDomainError) as except_info:
        thin_svd(np.ones((4, 5)), k)

    assert "k must lie in" in str(except_info.value)


@mark.numerics
def test_non_finite_input():
    a = np.ones((3, 3))
    a[1, 2] = np.nan

    with pytest.raises(HromValidationError):
        thin_svd(a, 1)
    with pytest.raises(HromValidationError):
        frobenius_norm(a)


def test_as_matrix():
    assert as_matrix([1, 2, 3]).shape == (1, 3)
    assert as_matrix(np.zeros((2, 2), dtype=np.int32)).dtype == np.float64

    with pytest.raises(HromValidationError):
        as_matrix(np.zeros((2, 2, 2)))


@mark.numerics
@mark.parametrize("a, expected",
                  [
                      (np.zeros((3, 4)), 0.0),
                      (np.array([[3.0, 4.0]]), 5.0),
                  ], ids=['frobenius_zero', 'frobenius_345'])
def test_frobenius_norm(a, expected):
    assert frobenius_norm(a) == expected


@mark.numerics
def test_frobenius_norm_against_loop():
    a = RandomStream(3).normal(size=(5, 5))
    total = 0.0
    for i in range(5):
        for j in range(5):
            total += a[i, j] * a[i, j]

    assert frobenius_norm(a) == pytest.approx(np.sqrt(total), abs=1e-12)


@mark.numerics
def test_tail_energy_monotone():
    _, s, _ = thin_svd(RandomStream(4).normal(size=(10, 8)), 8)
    tails = [tail_energy(s, r) for r in range(9)]

    assert all(a >= b for a, b in zip(tails[:-1], tails[1:]))
    assert tails[-1] == 0.0
    assert tails[0] == pytest.approx(float(np.sum(s ** 2)))


def test_random_stream_reproducible():
    first = RandomStream(42).normal(size=1000)
    second = RandomStream(42).normal(size=1000)

    assert np.array_equal(first, second)
    assert not np.array_equal(first, RandomStream(43).normal(size=1000))


def test_random_stream_across_processes():
    script = "from pyhrom.numerics import RandomStream; print(RandomStream(42).uniform(size=1000).tobytes().hex())"
    outputs = [subprocess.run([sys.executable, '-c', script], capture_output=True, text=True, check=True,
                              cwd=ROOT).stdout
               for _ in range(2)]

    assert outputs[0] == outputs[1]
    assert bytes.fromhex(outputs[0].strip()) == RandomStream(42).uniform(size=1000).tobytes()


def test_random_stream_children():
    parent = RandomStream(11)

    assert np.array_equal(parent.child(3).normal(size=5), RandomStream(11).child(3).normal(size=5))
    assert not np.array_equal(parent.child(0).normal(size=5), parent.child(1).normal(size=5))
    assert parent.child(2).spawn_key == (2,)
    assert child_seed(11, 2) == child_seed(11, 2) != child_seed(11, 3)


def test_random_stream_draws():
    stream = RandomStream(8)

    draws = stream.integers(1, 6, 10000)
    assert draws.min() == 1 and draws.max() == 6
    assert sorted(stream.permutation(10).tolist()) == list(range(10))
    assert np.linalg.norm(stream.unit_vector(17)) == pytest.approx(1.0, abs=1e-14)
    assert np.all((stream.uniform(-1.0, 1.0, 1000) >= -1.0) & (stream.uniform(-1.0, 1.0, 1000) < 1.0))


@mark.parametrize("seed, error", [(-1, HromDomainError), (2 ** 64, HromDomainError), (1.5, TypeError),
                                  (True, TypeError)],
                  ids=['seed_negative', 'seed_too_large', 'seed_float', 'seed_bool'])
def test_random_stream_bad_seed(seed, error):
    with pytest.raises(error):
        RandomStream(seed)


@mark.numerics
def test_orthonormal_columns():
    q = orthonormal_columns(RandomStream(6), 20, 5)

    assert q.shape == (20, 5)
    assert q.T @ q == pytest.approx(np.eye(5), abs=1e-12)
