"""
Finite-Difference Gradient Checks
=================================
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .tensor import GradTape, Tensor, backward


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    failures: List[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)


def gradcheck(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-7,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckResult:
    """
    Compare analytic gradients of the scalar ``fn()`` against central differences.

    An entry passes when ``|a - n| <= rtol * max(|a|, |n|) + atol``. With
    ``max_entries`` set, a random subset of entries per input is checked.
    """
    for t in inputs:
        t._grad = None
    with GradTape():
        loss = fn()
    backward(loss)
    analytic = [np.array(t.grad, copy=True) for t in inputs]

    failures: List[str] = []
    worst = 0.0
    checked = 0
    rng = rng or np.random.default_rng(0)
    for idx, t in enumerate(inputs):
        flat = t.data.reshape(-1)
        positions = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            positions = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        for pos in positions:
            original = flat[pos]
            flat[pos] = original + h
            plus = fn().item()
            flat[pos] = original - h
            minus = fn().item()
            flat[pos] = original
            numeric = (plus - minus) / (2 * h)
            a = float(analytic[idx].reshape(-1)[pos])
            worst = max(worst, relative_error(a, numeric) if abs(a - numeric) > atol else 0.0)
            if abs(a - numeric) > rtol * max(abs(a), abs(numeric)) + atol:
                failures.append(f"input {idx} entry {pos}: analytic={a:.8g} numeric={numeric:.8g}")
            checked += 1
    return GradCheckResult(max_rel_error=worst, checked=checked, failures=failures)
