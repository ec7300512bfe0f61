"""
Differentiable Operations
=========================

Every op computes its forward result with numpy and registers a
vector-Jacobian product on the active tape. Element-wise ops broadcast only a
trailing-suffix operand (bias over the last axis, positional tables over the
batch axis); any other shape combination raises ``DimensionError``.
"""

import builtins
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import DimensionError
from .tensor import Tensor, as_tensor, make_result

Axis = Optional[Union[int, Tuple[int, ...]]]

_GELU_C = float(np.sqrt(2.0 / np.pi))


# ---------------------------------------------------------------------- #
# Broadcasting helpers
# ---------------------------------------------------------------------- #
def _suffix_shape(op: str, a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    if a == b:
        return a
    if len(b) <= len(a) and a[len(a) - len(b):] == b:
        return a
    if len(a) < len(b) and b[len(b) - len(a):] == a:
        return b
    raise DimensionError(f"{op}: shapes {a} and {b} are not suffix-compatible")


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g.reshape(shape)


def _binary_operands(a: Any, b: Any) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# ---------------------------------------------------------------------- #
# Element-wise arithmetic
# ---------------------------------------------------------------------- #
def add(a: Any, b: Any) -> Tensor:
    a, b = _binary_operands(a, b)
    _suffix_shape("add", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return make_result(
        "add", a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a: Any, b: Any) -> Tensor:
    a, b = _binary_operands(a, b)
    _suffix_shape("sub", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return make_result(
        "sub", a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)),
    )


def mul(a: Any, b: Any) -> Tensor:
    a, b = _binary_operands(a, b)
    _suffix_shape("mul", a.shape, b.shape)
    ad, bd = a.data, b.data
    return make_result(
        "mul", ad * bd, (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def abs(a: Tensor) -> Tensor:
    ad = a.data
    return make_result("abs", np.abs(ad), (a,), lambda g: (g * np.sign(ad),))


def minimum(a: Any, b: Any) -> Tensor:
    """Element-wise minimum; ties route the gradient to ``a``."""
    a, b = _binary_operands(a, b)
    _suffix_shape("minimum", a.shape, b.shape)
    take_a = a.data <= b.data
    sa, sb = a.shape, b.shape
    return make_result(
        "minimum", np.where(take_a, a.data, b.data), (a, b),
        lambda g: (_unbroadcast(g * take_a, sa), _unbroadcast(g * ~take_a, sb)),
    )


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; the gradient is zero outside the interval."""
    inside = (a.data >= lo) & (a.data <= hi)
    return make_result(
        "clip", np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,)
    )


# ---------------------------------------------------------------------- #
# Unary non-linearities
# ---------------------------------------------------------------------- #
def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return make_result("exp", y, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(ad)
    return make_result("log", y, (a,), lambda g: (g / ad,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return make_result("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return make_result("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_result("relu", a.data * mask, (a,), lambda g: (g * mask,))


def gelu(a: Tensor) -> Tensor:
    """Tanh approximation of GELU."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    y = 0.5 * x * (1.0 + t)

    def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return make_result("gelu", y, (a,), vjp)


# ---------------------------------------------------------------------- #
# Reductions
# ---------------------------------------------------------------------- #
def _restore_reduced(g: np.ndarray, shape: Tuple[int, ...], axis: Axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))
    return make_result(
        "sum", out, (a,),
        lambda g: (_restore_reduced(g, shape, axis, keepdims).copy(),),
    )


def mean(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([shape[ax] for ax in axes]))
    out = np.asarray(a.data.mean(axis=axis, keepdims=keepdims))
    return make_result(
        "mean", out, (a,),
        lambda g: (_restore_reduced(g, shape, axis, keepdims) / count,),
    )


# ---------------------------------------------------------------------- #
# Linear algebra and shape manipulation
# ---------------------------------------------------------------------- #
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product over the last two axes.

    ``a`` is ``[..., m, k]``; ``b`` is either a shared ``[k, n]`` weight or a
    batch ``[..., k, n]`` with the same leading axes as ``a``.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs ≥2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    if b.ndim != 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul batch dims differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(ad, -1, -2) @ g
        return ga, gb

    return make_result("matmul", ad @ bd, (a, b), vjp)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as e:
        raise DimensionError(f"cannot reshape {src} to {tuple(shape)}") from e
    return make_result("reshape", out, (a,), lambda g: (g.reshape(src),))


def permute(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result(
        "permute", np.transpose(a.data, axes), (a,),
        lambda g: (np.transpose(g, inverse),),
    )


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    return make_result(
        "transpose", np.swapaxes(a.data, -1, -2), (a,),
        lambda g: (np.swapaxes(g, -1, -2),),
    )


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat shape mismatch: {[t.shape for t in tensors]}") from e
    bounds = np.cumsum(sizes)[:-1]
    return make_result(
        "concat", out, tensors,
        lambda g: tuple(np.split(g, bounds, axis=axis)),
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise DimensionError("stack needs at least one tensor")
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"stack shape mismatch: {[t.shape for t in tensors]}") from e
    return make_result(
        "stack", out, tensors,
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors))),
    )


def _is_basic_index(index: Any) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(
        isinstance(item, (int, np.integer, slice)) or item is None or item is Ellipsis
        for item in items
    )


def getitem(a: Tensor, index: Any) -> Tensor:
    """Basic slicing or integer-array gathering; gathers scatter-add on backward."""
    shape, dtype = a.shape, a.dtype
    out = np.asarray(a.data[index])
    if out.size == 0:
        raise DimensionError(f"index {index!r} selects nothing from shape {shape}")
    basic = _is_basic_index(index)

    def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros(shape, dtype=dtype)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return make_result("getitem", out.copy() if basic else out, (a,), vjp)


def take_along_last(a: Tensor, indices: np.ndarray) -> Tensor:
    """Pick ``a[..., indices[...]]``; ``indices`` has ``a``'s shape minus the last axis."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.shape != a.shape[:-1]:
        raise DimensionError(
            f"take_along_last indices {indices.shape} do not match {a.shape[:-1]}"
        )
    picked = np.take_along_axis(a.data, indices[..., None], axis=-1)[..., 0]
    shape, dtype = a.shape, a.dtype

    def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros(shape, dtype=dtype)
        np.put_along_axis(full, indices[..., None], g[..., None], axis=-1)
        return (full,)

    return make_result("take_along_last", picked, (a,), vjp)


def expand_batch(a: Tensor, batch: int) -> Tensor:
    """Repeat ``a`` along a new leading batch axis."""
    out = np.broadcast_to(a.data, (batch,) + a.shape).copy()
    return make_result("expand_batch", out, (a,), lambda g: (g.sum(axis=0),))


# ---------------------------------------------------------------------- #
# Fused kernels
# ---------------------------------------------------------------------- #
def softmax_lastdim(x: Tensor) -> Tensor:
    if x.ndim == 0 or x.shape[-1] < 1:
        raise DimensionError(f"softmax needs a non-empty last axis, got {x.shape}")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    return make_result(
        "softmax", y, (x,),
        lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),),
    )


def log_softmax(x: Tensor) -> Tensor:
    if x.ndim == 0 or x.shape[-1] < 1:
        raise DimensionError(f"log_softmax needs a non-empty last axis, got {x.shape}")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse
    probs = np.exp(y)
    return make_result(
        "log_softmax", y, (x,),
        lambda g: (g - probs * g.sum(axis=-1, keepdims=True),),
    )


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    if eps <= 0:
        raise DimensionError(f"layer_norm eps must be positive, got {eps}")
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise DimensionError(
            f"layer_norm gain/bias {gain.shape}/{bias.shape} do not match width {width}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    gd = gain.data

    def vjp(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        gx = g * gd
        dx = inv_std * (
            gx
            - gx.mean(axis=-1, keepdims=True)
            - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
        )
        flat_g = g.reshape(-1, width)
        return dx, (flat_g * xhat.reshape(-1, width)).sum(axis=0), flat_g.sum(axis=0)

    return make_result("layer_norm", xhat * gd + bias.data, (x, gain, bias), vjp)


def unfold2d(x: Tensor, kernel: int, stride: int) -> Tensor:
    """
    Extract sliding ``kernel × kernel`` patches from ``[B, H, W, C]``.

    Returns ``[B, Ho*Wo, kernel*kernel*C]`` with patches in row-major
    (row, column) order and each patch flattened as (ki, kj, c).
    """
    if x.ndim != 4:
        raise DimensionError(f"unfold2d expects [B, H, W, C], got {x.shape}")
    if kernel < 1 or stride < 1:
        raise DimensionError(f"unfold2d kernel/stride must be ≥1, got {kernel}/{stride}")
    b, h, w, c = x.shape
    if h < kernel or w < kernel:
        raise DimensionError(f"unfold2d kernel {kernel} larger than input {h}×{w}")
    ho = (h - kernel) // stride + 1
    wo = (w - kernel) // stride + 1
    windows = np.lib.stride_tricks.sliding_window_view(x.data, (kernel, kernel), axis=(1, 2))
    windows = windows[:, ::stride, ::stride][:, :ho, :wo]
    out = np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 5, 3)).reshape(
        b, ho * wo, kernel * kernel * c
    )
    dtype = x.dtype

    def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
        g = g.reshape(b, ho, wo, kernel, kernel, c)
        full = np.zeros((b, h, w, c), dtype=dtype)
        row_end = stride * (ho - 1) + 1
        col_end = stride * (wo - 1) + 1
        for ki in range(kernel):
            for kj in range(kernel):
                full[:, ki:ki + row_end:stride, kj:kj + col_end:stride, :] += g[:, :, :, ki, kj, :]
        return (full,)

    return make_result("unfold2d", out, (x,), vjp)


def square(a: Tensor) -> Tensor:
    return mul(a, a)


def scale(a: Tensor, factor: float) -> Tensor:
    return mul(a, builtins.float(factor))
