"""
Kuramoto-Sivashinsky equation ``u_t + u u_x + u_xx + u_xxxx = 0`` on a periodic domain of length ``Lx``.

Fourier pseudospectral in space. Per mode ``q = 2 pi k / Lx`` the linear part ``L(q) = q^2 - q^4`` is advanced
Crank-Nicolson and the nonlinear part ``N(u) = -1/2 d/dx (u^2)`` Adams-Bashforth-2, the first step using forward
Euler on ``N``. Products are dealiased with the 2/3 rule.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from pyhrom.datasets.snapshots import ShuffledRatio, SnapshotMatrix, split_dataset
from pyhrom.exceptions import HromConfigError, HromSimulationError
from pyhrom.numerics import RandomStream

log = logging.getLogger(__name__)

BLOW_UP = 1e6


@dataclass
class KSConfig:
    N: int = 512
    Lx: float = 64 * np.pi
    dt: float = 0.01
    n_steps: int = 2000
    transient_skip: Optional[int] = None
    save_every: int = 1
    seed: int = 0
    n_modes: int = 10
    max_wavenumber: int = 6
    amplitude: float = 1.0

    def __post_init__(self):
        if self.N < 4 or self.N & (self.N - 1):
            raise HromConfigError(f"N must be a power of two, got {self.N}", field='N')
        if self.dt <= 0:
            raise HromConfigError("dt must be positive", field='dt')
        if self.Lx <= 0:
            raise HromConfigError("Lx must be positive", field='Lx')
        if self.n_steps < 1:
            raise HromConfigError("n_steps must be at least 1", field='n_steps')
        if self.transient_skip is None:
            self.transient_skip = self.n_steps // 4
        if not 0 <= self.transient_skip < self.n_steps:
            raise HromConfigError("transient_skip must lie in [0, n_steps)", field='transient_skip')
        if self.save_every < 1:
            raise HromConfigError("save_every must be at least 1", field='save_every')
        if self.n_modes < 1 or self.max_wavenumber < 1:
            raise HromConfigError("the initial condition needs at least one mode", field='n_modes')

    @property
    def grid(self) -> np.ndarray:
        return self.Lx * np.arange(self.N) / self.N

    @property
    def saved_steps(self) -> np.ndarray:
        """ Step indices of the stored snapshots. """

        return np.arange(self.transient_skip + 1, self.n_steps + 1)[::self.save_every]


def ks_initial_condition(config: KSConfig, stream: RandomStream) -> np.ndarray:
    """
    ``u(x, 0) = sum_k A_k [sin(2 pi n_k x / Lx + phi_k) + cos(2 pi n_k x / Lx + phi_k)]`` on the periodic grid,
    with ``A_k ~ U(-amplitude, amplitude)``, ``phi_k ~ U(0, 2 pi)`` and ``n_k`` uniform on ``1..max_wavenumber``.
    """

    amplitudes = stream.uniform(-1.0, 1.0, config.n_modes) * config.amplitude
    phases = stream.uniform(0.0, 2 * np.pi, config.n_modes)
    wavenumbers = stream.integers(1, config.max_wavenumber, config.n_modes)

    angle = 2 * np.pi * np.outer(wavenumbers, config.grid) / config.Lx + phases[:, None]
    return amplitudes @ (np.sin(angle) + np.cos(angle))


def simulate_ks(config: KSConfig, stream: RandomStream, u0: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Integrates from ``u0`` (default: :func:`ks_initial_condition`) for ``n_steps`` steps.

    :raises HromSimulationError: ``max|u|`` exceeds 1e6 or turns non-finite; the step is attached.
    :returns: stored snapshots after the transient, one row per saved step.
    """

    u = ks_initial_condition(config, stream) if u0 is None else np.asarray(u0, dtype=np.float64).copy()

    k = np.arange(config.N // 2 + 1)
    q = 2 * np.pi * k / config.Lx
    lin = q ** 2 - q ** 4
    dealias = k < config.N / 3
    half_i_q = -0.5j * q * dealias

    implicit = 1.0 - 0.5 * config.dt * lin
    explicit = 1.0 + 0.5 * config.dt * lin

    def nonlinear(u_phys):
        return half_i_q * np.fft.rfft(u_phys * u_phys)

    u_hat = np.fft.rfft(u)
    n_prev = nonlinear(u)

    saved = set(config.saved_steps.tolist())
    out = np.empty((len(saved), config.N))
    row = 0

    for step in range(1, config.n_steps + 1):
        n_now = nonlinear(u)
        forcing = n_now if step == 1 else 1.5 * n_now - 0.5 * n_prev
        u_hat = (explicit * u_hat + config.dt * forcing) / implicit
        n_prev = n_now

        u = np.fft.irfft(u_hat, n=config.N)
        peak = np.max(np.abs(u))
        if not np.isfinite(peak) or peak > BLOW_UP:
            raise HromSimulationError(f"KS solution blew up at step {step} (max|u| = {peak:.3e})", step=step)

        if step in saved:
            out[row] = u
            row += 1

    return out


def generate_ks(config: KSConfig, split: Optional[ShuffledRatio] = None) -> SnapshotMatrix:
    """ One KS trajectory as a snapshot matrix with a shuffled 7:3 split (raw, not standardized). """

    data = simulate_ks(config, RandomStream(config.seed))
    split = ShuffledRatio(0.7, config.seed) if split is None else split
    train_idx, test_idx = split_dataset(data.shape[0], split)

    log.info("generated KS trajectory: %d snapshots on %d points (seed %d)", data.shape[0], config.N, config.seed)
    return SnapshotMatrix(data, train_idx=train_idx, test_idx=test_idx,
                          times=config.saved_steps * config.dt,
                          meta={'generator': 'ks', 'N': config.N, 'Lx': float(config.Lx), 'dt': config.dt,
                                'n_steps': config.n_steps, 'transient_skip': config.transient_skip,
                                'seed': config.seed})
