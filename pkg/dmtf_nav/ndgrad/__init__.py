"""
ndgrad: dense tensors with tape-based reverse-mode differentiation.
"""

from . import ops
from .checkpoint import load_checkpoint, manifest_path_for, save_checkpoint
from .gradcheck import GradCheckResult, gradcheck
from .nn import LayerNorm, Linear, Module, ModuleList, Parameter
from .optim import AdamState, adam_step, clip_grad_norm, global_grad_norm
from .tensor import (
    GradTape,
    Tensor,
    backward,
    default_dtype,
    get_default_dtype,
    set_default_dtype,
    set_finite_checks,
)

__all__ = [
    "ops",
    "Tensor",
    "GradTape",
    "backward",
    "default_dtype",
    "get_default_dtype",
    "set_default_dtype",
    "set_finite_checks",
    "Module",
    "ModuleList",
    "Parameter",
    "Linear",
    "LayerNorm",
    "AdamState",
    "adam_step",
    "clip_grad_norm",
    "global_grad_norm",
    "save_checkpoint",
    "load_checkpoint",
    "manifest_path_for",
    "gradcheck",
    "GradCheckResult",
]
