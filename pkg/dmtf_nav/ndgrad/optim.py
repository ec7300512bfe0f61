"""
Adam Optimizer
==============
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..core.errors import DimensionError, TrainingError
from .nn import Parameter

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Per-parameter moment buffers plus hyperparameters."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise TrainingError(f"Adam learning rate must be positive, got {self.lr}")

    @classmethod
    def for_parameters(cls, named: Sequence[Tuple[str, Parameter]], lr: float) -> "AdamState":
        state = cls(lr=lr)
        for name, p in named:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(named_params: Sequence[Tuple[str, Parameter]], state: AdamState) -> None:
    """
    Apply one bias-corrected Adam update using each parameter's ``grad``.

    Raises:
        TrainingError: if any gradient holds NaN/Inf; parameters are untouched.
    """
    grads: List[np.ndarray] = []
    for name, p in named_params:
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise TrainingError(
                f"Non-finite gradient in '{name}' ({bad} of {g.size} entries) at Adam step {state.step + 1}"
            )
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        if state.m[name].shape != p.shape:
            raise DimensionError(
                f"Adam moments for '{name}' have shape {state.m[name].shape}, parameter is {p.shape}"
            )
        grads.append(g)

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for (name, p), g in zip(named_params, grads):
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        p.data = (p.data - update).astype(p.dtype, copy=False)


def global_grad_norm(params: Sequence[Parameter]) -> float:
    total = 0.0
    for p in params:
        if p._grad is not None:
            total += float(np.sum(p._grad * p._grad))
    return float(np.sqrt(total))


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is ≤ ``max_norm``."""
    norm = global_grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for p in params:
            if p._grad is not None:
                p._grad = p._grad * factor
    return norm
