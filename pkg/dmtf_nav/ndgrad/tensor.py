"""
Tensor and Gradient Tape
========================

Dense n-dimensional arrays that take part in a reverse-mode gradient graph.

Operations are only recorded while a :class:`GradTape` is active on the current
thread and at least one input requires gradients. Outside a tape every op is a
plain numpy computation, which is how rollout workers run the policy.
"""

import threading
from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import DimensionError, GradientError, NumericError

VJP = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_DEFAULT_DTYPE = np.float64
_CHECK_FINITE = True
_local = threading.local()


def get_default_dtype() -> type:
    return _DEFAULT_DTYPE


def set_default_dtype(dtype: Any) -> None:
    """Set the dtype used when a Tensor is built from non-float data."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise DimensionError(f"Unsupported tensor dtype: {dtype}")
    _DEFAULT_DTYPE = dtype.type


@contextmanager
def default_dtype(dtype: Any) -> Iterator[None]:
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


def set_finite_checks(enabled: bool) -> None:
    """Toggle the NaN/Inf check performed on every op output."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


def _tape_stack() -> List["GradTape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape() -> Optional["GradTape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """
    Dense real array with an optional gradient buffer.

    Args:
        data: Array-like values, stored row-major.
        requires_grad: Whether gradients are accumulated for this tensor.
        dtype: Explicit float dtype; defaults to the data's float dtype or the
            package default.
        name: Optional label used in diagnostics and checkpoints.
    """

    __slots__ = ("data", "requires_grad", "_grad", "_tape", "name")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        dtype: Any = None,
        name: Optional[str] = None,
    ):
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = _DEFAULT_DTYPE
        array = np.array(data, dtype=dtype, copy=True) if isinstance(data, np.ndarray) \
            else np.asarray(data, dtype=dtype)
        if any(extent <= 0 for extent in array.shape):
            raise DimensionError(f"Tensor extents must be positive, got {array.shape}")
        self.data: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self._grad: Optional[np.ndarray] = None
        self._tape: Optional["GradTape"] = None
        self.name = name

    @classmethod
    def _wrap(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Wrap an op result without copying."""
        tensor = cls.__new__(cls)
        tensor.data = array
        tensor.requires_grad = requires_grad
        tensor._grad = None
        tensor._tape = None
        tensor.name = None
        return tensor

    # ------------------------------------------------------------------ #
    # Metadata
    # ------------------------------------------------------------------ #
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def grad(self) -> Optional[np.ndarray]:
        """Gradient buffer; zero-filled on first access for grad-requiring tensors."""
        if self._grad is None and self.requires_grad:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value: Optional[np.ndarray]) -> None:
        if value is not None and value.shape != self.data.shape:
            raise DimensionError(
                f"Gradient shape {value.shape} does not match tensor shape {self.data.shape}"
            )
        self._grad = value

    def zero_grad(self) -> None:
        if self.requires_grad:
            self._grad = np.zeros_like(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return (
            f"Tensor(shape={self.shape}, dtype={self.dtype}, "
            f"requires_grad={self.requires_grad}{label})"
        )

    def __len__(self) -> int:
        return self.shape[0]

    # ------------------------------------------------------------------ #
    # Operator sugar (implementations live in ops.py)
    # ------------------------------------------------------------------ #
    def __add__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.add(ops.neg(self), other)

    def __mul__(self, other: Any) -> "Tensor":
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from . import ops

        return ops.neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import ops

        return ops.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        from . import ops

        return ops.getitem(self, index)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        from . import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        from . import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Any) -> "Tensor":
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def exp(self) -> "Tensor":
        from . import ops

        return ops.exp(self)

    def log(self) -> "Tensor":
        from . import ops

        return ops.log(self)

    def backward(self) -> None:
        backward(self)


class _Record:
    __slots__ = ("op", "out", "parents", "vjp")

    def __init__(self, op: str, out: Tensor, parents: Tuple[Tensor, ...], vjp: VJP):
        self.op = op
        self.out = out
        self.parents = parents
        self.vjp = vjp


class GradTape:
    """
    Ordered record of executed ops for one forward/backward pass.

    Usage::

        with GradTape() as tape:
            loss = model_loss(...)
        backward(loss)
    """

    def __init__(self) -> None:
        self._records: List[_Record] = []
        self._consumed = False

    def __enter__(self) -> "GradTape":
        if self._consumed:
            raise GradientError("Cannot re-enter a consumed gradient tape")
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc: Any) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self._records)

    @property
    def consumed(self) -> bool:
        return self._consumed

    def record(self, op: str, out: Tensor, parents: Tuple[Tensor, ...], vjp: VJP) -> None:
        if self._consumed:
            raise GradientError("Gradient tape already consumed by backward()")
        out._tape = self
        self._records.append(_Record(op, out, parents, vjp))

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every grad-requiring tensor upstream of ``loss``."""
        if self._consumed:
            raise GradientError("backward() called twice on the same tape")
        if loss.data.size != 1:
            raise GradientError(f"backward() needs a scalar loss, got shape {loss.shape}")

        pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: Dict[int, Tensor] = {}
        for rec in reversed(self._records):
            g = pending.pop(id(rec.out), None)
            if g is None:
                continue
            _accumulate(rec.out, g)
            parent_grads = rec.vjp(g)
            for parent, pg in zip(rec.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg
                    if parent._tape is not self:
                        leaves[key] = parent

        for key, tensor in leaves.items():
            g = pending.get(key)
            if g is not None:
                _accumulate(tensor, g)
        if id(loss) in pending and not self._records:
            _accumulate(loss, pending[id(loss)])

        self._records.clear()
        self._consumed = True


def _accumulate(tensor: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=tensor.dtype).reshape(tensor.shape)
    if tensor._grad is None:
        tensor._grad = g.copy()
    else:
        tensor._grad = tensor._grad + g


def backward(loss: Tensor) -> None:
    """Run reverse-mode differentiation from a scalar produced on a live tape."""
    tape = loss._tape
    if tape is None:
        raise GradientError("Loss was not produced from a live gradient tape")
    tape.backward(loss)


def make_result(
    op: str,
    array: np.ndarray,
    parents: Sequence[Tensor],
    vjp: VJP,
) -> Tensor:
    """Wrap an op output and register it on the active tape when needed."""
    if _CHECK_FINITE and not np.all(np.isfinite(array)):
        raise NumericError(f"Non-finite values produced by op '{op}'")
    tape = active_tape()
    needs_grad = tape is not None and any(p.requires_grad for p in parents)
    out = Tensor._wrap(array, requires_grad=needs_grad)
    if needs_grad:
        tape.record(op, out, tuple(parents), vjp)
    return out


def as_tensor(value: Any, like: Optional[Tensor] = None) -> Tensor:
    """Promote scalars and arrays to constant tensors matching ``like``'s dtype."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor._wrap(np.asarray(value, dtype=dtype or _DEFAULT_DTYPE))
