"""
Module Containers
=================

Parameter registration and the small set of building blocks shared by the
network: ``Linear`` and ``LayerNorm``.
"""

from collections import OrderedDict
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from ..core.errors import CheckpointError
from . import ops
from .tensor import Tensor, get_default_dtype


class Parameter(Tensor):
    """A trainable tensor; always requires gradients."""

    __slots__ = ()

    def __init__(self, data: Any, dtype: Any = None, name: Optional[str] = None):
        super().__init__(data, requires_grad=True, dtype=dtype, name=name)


class Module:
    """
    Base class with ordered parameter and submodule registration.

    Assigning a :class:`Parameter` or :class:`Module` attribute registers it, so
    ``named_parameters()`` order is the construction order. That order defines
    the checkpoint layout.
    """

    def __init__(self) -> None:
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            yield f"{prefix}{name}", param
        for name, module in self._modules.items():
            yield from module.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data.copy()) for name, p in self.named_parameters())

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        """Copy arrays into parameters, checking names and shapes."""
        own = OrderedDict(self.named_parameters())
        if strict:
            missing = [k for k in own if k not in state]
            unexpected = [k for k in state if k not in own]
            if missing or unexpected:
                raise CheckpointError(
                    f"State mismatch: missing={missing[:5]} unexpected={unexpected[:5]}"
                )
        for name, param in own.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise CheckpointError(
                    f"Tensor '{name}' has shape {value.shape}, model expects {param.shape}"
                )
            param.data = value.astype(param.dtype, copy=True)
            param._grad = None

    def to_dtype(self, dtype: Any) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p._grad = None
        return self

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError


class ModuleList(Module):
    def __init__(self, modules: Optional[List[Module]] = None):
        super().__init__()
        self._items: List[Module] = []
        for module in modules or []:
            self.append(module)

    def append(self, module: Module) -> None:
        self._modules[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, idx: int) -> Module:
        return self._items[idx]


def uniform_init(rng: np.random.Generator, shape: Tuple[int, ...], bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(get_default_dtype())


class Linear(Module):
    """
    Affine map ``x @ W + b`` over the last axis.

    Args:
        in_features: Input width.
        out_features: Output width.
        rng: Generator used for fan-in scaled uniform initialization.
        bias: Whether to include an additive bias (zero-initialized).
        gain: Multiplier on the init bound; small gains give near-uniform heads.
    """

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        bias: bool = True,
        gain: float = 1.0,
    ):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        bound = gain / np.sqrt(in_features)
        self.weight = Parameter(uniform_init(rng, (in_features, out_features), bound))
        self.bias: Optional[Parameter] = None
        if bias:
            self.bias = Parameter(np.zeros(out_features, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        if self.bias is not None:
            y = ops.add(y, self.bias)
        return y


class LayerNorm(Module):
    def __init__(self, width: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        dtype = get_default_dtype()
        self.gain = Parameter(np.ones(width, dtype=dtype))
        self.bias = Parameter(np.zeros(width, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias, self.eps)
