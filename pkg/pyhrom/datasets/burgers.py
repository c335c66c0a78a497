"""
Viscous Burgers equation ``u_t + u u_x = nu u_xx`` on ``[0, L]`` with ``nu = 1 / Re`` and the closed-form solution

    u(x, t) = (x / (t + 1)) / (1 + sqrt((t + 1) / t0) exp(Re x^2 / (4 (t + 1)))),    t0 = exp(Re / 8)

evaluated in log space, since ``exp(Re x^2 / 4)`` overflows for large Re.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.special import expit

from pyhrom.datasets.snapshots import ByParameter, SnapshotMatrix, split_dataset
from pyhrom.exceptions import HromConfigError

log = logging.getLogger(__name__)

TRAIN_RE: Tuple[float, ...] = tuple(float(re) for re in range(100, 1901, 100))
TEST_RE: Tuple[float, ...] = tuple(float(re) for re in range(50, 2451, 200))


@dataclass
class BurgersConfig:
    Re: float = 1000.0
    nx: int = 128
    nt: int = 100
    T: float = 2.0
    L: float = 1.0

    def __post_init__(self):
        if self.Re <= 0:
            raise HromConfigError(f"Re must be positive, got {self.Re}", field='Re')
        if self.nx < 2 or self.nt < 1:
            raise HromConfigError("nx must be at least 2 and nt at least 1", field='nx')
        if self.T <= 0 or self.L <= 0:
            raise HromConfigError("T and L must be positive", field='T')

    @property
    def nu(self) -> float:
        return 1.0 / self.Re

    @property
    def t0(self) -> float:
        return float(np.exp(self.Re / 8.0))

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.nx)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt)


def burgers_solution(config: BurgersConfig, x, t):
    """ Pointwise analytic solution; ``x`` and ``t`` broadcast against each other. """

    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    tp1 = t + 1.0
    log_denominator = 0.5 * np.log(tp1) - config.Re / 16.0 + config.Re * x * x / (4.0 * tp1)
    return (x / tp1) * expit(-log_denominator)


def burgers_initial_condition(config: BurgersConfig, x):
    """ ``u(x, 0) = x / (1 + exp(Re x^2 / 4) / sqrt(t0))``. """

    x = np.asarray(x, dtype=np.float64)
    return x * expit(config.Re / 16.0 - config.Re * x * x / 4.0)


def burgers_trajectory(config: BurgersConfig) -> np.ndarray:
    """ nt x nx grid values. """

    return burgers_solution(config, config.x[None, :], config.t[:, None])


def generate_burgers(train_re: Sequence[float] = TRAIN_RE,
                     test_re: Sequence[float] = TEST_RE,
                     nx: int = 128,
                     nt: int = 100,
                     T: float = 2.0) -> SnapshotMatrix:
    """
    Parametric dataset: one trajectory per Reynolds number, rows ordered trajectory by trajectory, Re stored
    as the per-row parameter and split by parameter.
    """

    policy = ByParameter(tuple(float(r) for r in train_re), tuple(float(r) for r in test_re))
    values = list(policy.train_values) + list(policy.test_values)

    blocks, params, trajectory, times = [], [], [], []
    for i, re in enumerate(values):
        config = BurgersConfig(Re=re, nx=nx, nt=nt, T=T)
        blocks.append(burgers_trajectory(config))
        params.append(np.full(nt, re))
        trajectory.append(np.full(nt, i))
        times.append(config.t)

    snapshots = SnapshotMatrix(np.vstack(blocks), params=np.concatenate(params)[:, None],
                               trajectory=np.concatenate(trajectory), times=np.concatenate(times),
                               meta={'generator': 'burgers', 'nx': nx, 'nt': nt, 'T': T,
                                     'train_re': list(policy.train_values), 'test_re': list(policy.test_values)})
    snapshots.train_idx, snapshots.test_idx = split_dataset(snapshots, policy)

    log.info("generated Burgers dataset: %d train and %d test trajectories of %d x %d",
             len(policy.train_values), len(policy.test_values), nt, nx)
    return snapshots
