from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from pyhrom.exceptions import HromDomainError
from pyhrom.nn.params import Parameter
from pyhrom.nn.tape import Tape, Tensor


@dataclass
class GradCheckReport:
    errors: Dict[str, float] = field(default_factory=dict)
    tol: float = 1e-4
    flagged: List[str] = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return not self.flagged

    def __repr__(self):
        return f'<GradCheckReport: max_error={self.max_error:.3e}, flagged={self.flagged}>'


def analytic_gradients(closure: Callable[[], Tensor], params: Sequence[Parameter]) -> Dict[str, np.ndarray]:
    for p in params:
        p.grad = np.zeros_like(p.value)
    with Tape() as tape:
        loss = closure()
    tape.backward(loss)
    return {p.name: p.grad.copy() for p in params}


def gradient_check(closure: Callable[[], Tensor],
                   params: Sequence[Parameter],
                   h: float = 1e-6,
                   tol: float = 1e-4,
                   analytic: Optional[Dict[str, np.ndarray]] = None,
                   floor: float = 1e-5) -> GradCheckReport:
    """
    Compares reverse-mode gradients against central differences ``(L(p + h) - L(p - h)) / 2h``.

    The relative error of an entry is ``|g_a - g_n| / max(|g_a|, |g_n|, floor)``; the report holds its maximum
    per tensor and flags every tensor above ``tol``.

    :param closure: re-evaluates the scalar loss from the current parameter values.
    :param params: tensors to check.
    :param h: step, in [1e-8, 1e-4].
    :param tol: flagging threshold.
    :param analytic: precomputed gradients to check instead of running the tape.
    :param floor: denominator floor, so entries with vanishing gradients are compared absolutely.
    :raises HromDomainError: h outside its range.
    """

    if not 1e-8 <= h <= 1e-4:
        raise HromDomainError(f"h must lie in [1e-8, 1e-4], got {h}")

    if analytic is None:
        analytic = analytic_gradients(closure, params)

    report = GradCheckReport(tol=tol)
    for p in params:
        numeric = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = closure().item()
            flat[i] = original - h
            minus = closure().item()
            flat[i] = original
            numeric.reshape(-1)[i] = (plus - minus) / (2.0 * h)

        a = analytic[p.name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        error = float(np.max(np.abs(a - numeric) / denom)) if a.size else 0.0
        report.errors[p.name] = error
        if error > tol:
            report.flagged.append(p.name)

    return report
