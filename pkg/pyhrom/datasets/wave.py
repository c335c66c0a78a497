import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from pyhrom.datasets.snapshots import ByTime, SnapshotMatrix, split_dataset
from pyhrom.exceptions import HromConfigError

log = logging.getLogger(__name__)


@dataclass
class WaveConfig:
    """ Gaussian density ``N(x | mu(t), sigma2)`` with ``mu(t) = amplitude (sin(omega t) + 1) + offset``. """

    nx: int = 256
    n_steps: int = 100000
    sigma2: float = 10.0
    amplitude: float = 100.0
    omega: float = 0.01
    offset: float = 28.0

    def __post_init__(self):
        if self.nx < 1:
            raise HromConfigError("nx must be positive", field='nx')
        if self.n_steps < 1:
            raise HromConfigError("n_steps must be positive", field='n_steps')
        if self.sigma2 <= 0:
            raise HromConfigError("sigma2 must be positive", field='sigma2')

    def mu(self, t) -> np.ndarray:
        return self.amplitude * (np.sin(self.omega * np.asarray(t, dtype=np.float64)) + 1.0) + self.offset


def gen_traveling_wave(config: WaveConfig) -> np.ndarray:
    """ n_steps x nx samples at integer times ``t = 0 .. n_steps - 1`` and grid points ``x = 0 .. nx - 1``. """

    t = np.arange(config.n_steps, dtype=np.float64)
    x = np.arange(config.nx, dtype=np.float64)
    return norm.pdf(x[None, :], loc=config.mu(t)[:, None], scale=np.sqrt(config.sigma2))


def generate_wave(config: WaveConfig, train_fraction: float = 0.5) -> SnapshotMatrix:
    data = gen_traveling_wave(config)
    train_idx, test_idx = split_dataset(data.shape[0], ByTime(train_fraction))

    log.info("generated traveling wave: %d steps on %d points", config.n_steps, config.nx)
    return SnapshotMatrix(data, train_idx=train_idx, test_idx=test_idx,
                          times=np.arange(config.n_steps, dtype=np.float64),
                          meta={'generator': 'wave', 'nx': config.nx, 'n_steps': config.n_steps,
                                'sigma2': config.sigma2, 'dt': 1.0})
