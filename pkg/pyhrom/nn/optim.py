import logging
from dataclasses import dataclass, field
from enum import Enum, unique
from typing import Dict, Optional

import numpy as np

from pyhrom.exceptions import HromConfigError, HromOptimizationError
from pyhrom.nn.params import ParamGroup, ParamStore

log = logging.getLogger(__name__)


@unique
class Scheduler(Enum):
    CONSTANT = 'constant'
    CYCLIC = 'cyclic'


@dataclass
class CyclicSchedule:
    """
    Triangular learning-rate policy.

    The multiplier applied to every group rate rises linearly from ``low`` to ``high`` over the first half
    of each cycle and falls back over the second half. With the defaults the rate swings between lr/10 and lr.
    """

    cycle_steps: int = 2000
    low: float = 0.1
    high: float = 1.0

    def __post_init__(self):
        if self.cycle_steps < 2:
            raise HromConfigError("cycle_steps must be at least 2", field='cycle_steps')
        if not 0.0 < self.low <= self.high:
            raise HromConfigError("cyclic bounds must satisfy 0 < low <= high", field='low')

    def factor(self, step: int) -> float:
        phase = (step % self.cycle_steps) / self.cycle_steps
        triangle = 1.0 - abs(2.0 * phase - 1.0)
        return self.low + (self.high - self.low) * triangle


@dataclass
class AdamState:
    """ Moment buffers, step counter and per-group learning rates. """

    lr: Dict[ParamGroup, float] = field(default_factory=lambda: {ParamGroup.NETWORK: 1e-4, ParamGroup.BLEND: 1e-5})
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    clip_norm: Optional[float] = None
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.lr = {ParamGroup(g): float(rate) for g, rate in self.lr.items()}
        if any(rate < 0 for rate in self.lr.values()):
            raise HromConfigError("learning rates must be non-negative", field='lr')
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise HromConfigError("Adam betas must lie in [0, 1)", field='beta1')
        if self.eps <= 0:
            raise HromConfigError("eps must be positive", field='eps')
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise HromConfigError("clip_norm must be positive", field='clip_norm')


def adam_step(state: AdamState, params: ParamStore, lr_scale: float = 1.0) -> None:
    """
    One bias-corrected Adam update of every trainable tensor, in place.

    :param state: optimizer state; ``t`` is incremented by one.
    :param params: store whose gradient buffers are populated.
    :param lr_scale: multiplier from a learning-rate schedule.
    :raises HromOptimizationError: a gradient holds NaN/Inf; the offending tensor is named.
    :raises HromConfigError: a trainable tensor belongs to a group without a learning rate.
    """

    trainable = params.trainable()
    for p in trainable:
        if not np.all(np.isfinite(p.grad)):
            raise HromOptimizationError(f"non-finite gradient in tensor '{p.name}'", tensor=p.name)
        if p.group not in state.lr:
            raise HromConfigError(f"no learning rate for group '{p.group.value}'", field=p.name)

    scale = 1.0
    if state.clip_norm is not None:
        norm = float(np.sqrt(sum(np.sum(p.grad * p.grad) for p in trainable)))
        if norm > state.clip_norm:
            scale = state.clip_norm / norm

    state.t += 1
    correction1 = 1.0 - state.beta1 ** state.t
    correction2 = 1.0 - state.beta2 ** state.t

    for p in trainable:
        g = p.grad * scale
        if state.weight_decay:
            g = g + state.weight_decay * p.value

        m = state.m.setdefault(p.name, np.zeros_like(p.value))
        v = state.v.setdefault(p.name, np.zeros_like(p.value))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g

        lr = state.lr[p.group] * lr_scale
        p.value -= lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
