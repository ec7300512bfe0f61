"""
Network Layers
==============

Building blocks of the DMTF policy: patch embedding, audio preparation, the
strided audio CNN used when patch embedding is ablated, multi-head
attention, pre-norm encoder and decoder layers, modality fusion, slot
pooling and the GRU cell.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..ndgrad import ops
from ..ndgrad.nn import LayerNorm, Linear, Module, Parameter, uniform_init
from ..ndgrad.tensor import Tensor
from .errors import AnalysisError, ConfigError, DimensionError


# ---------------------------------------------------------------------- #
# Input preparation
# ---------------------------------------------------------------------- #
def _fit_axis(x: np.ndarray, axis: int, target: int) -> np.ndarray:
    """Tile (then truncate) a short axis, centre-crop a long one."""
    n = x.shape[axis]
    if n == target:
        return x
    if n < target:
        reps = -(-target // n)
        tiled = np.concatenate([x] * reps, axis=axis)
        return np.take(tiled, np.arange(target), axis=axis)
    start = (n - target) // 2
    return np.take(x, np.arange(start, start + target), axis=axis)


def prep_audio(spectrogram: np.ndarray, height: int, width: int, channels: int) -> np.ndarray:
    """
    Fit a ``[F, T, 2]`` (or batched ``[B, F, T, 2]``) spectrogram to image shape.

    Frequency and time axes are tiled by concatenation when short and
    centre-cropped when long; missing channels are zero-filled.
    """
    spec = np.asarray(spectrogram)
    if spec.ndim not in (3, 4) or any(extent == 0 for extent in spec.shape):
        raise DimensionError(f"prep_audio expects non-empty [F, T, 2] input, got {spec.shape}")
    lead = spec.ndim - 3
    spec = _fit_axis(spec, lead, height)
    spec = _fit_axis(spec, lead + 1, width)
    have = spec.shape[-1]
    if have >= channels:
        return spec[..., :channels]
    pad = np.zeros(spec.shape[:-1] + (channels - have,), dtype=spec.dtype)
    return np.concatenate([spec, pad], axis=-1)


# ---------------------------------------------------------------------- #
# Token sequences
# ---------------------------------------------------------------------- #
@dataclass
class PatchSequence:
    tokens: Tensor
    modality: str

    @property
    def patch_count(self) -> int:
        return self.tokens.shape[-2]


@dataclass
class FusedSequence:
    tokens: Tensor
    boundary: int


class PatchEmbedding(Module):
    """
    Non-overlapping ``P × P`` patches, linearly projected, plus a learned
    positional table.

    Args:
        image_size: Input height and width (must be divisible by ``patch_size``).
        channels: Input channels.
        patch_size: Patch edge ``P``.
        d_model: Token width.
        rng: Initialization generator.
        init_scale: Half-width of the uniform positional init.
    """

    def __init__(
        self,
        image_size: int,
        channels: int,
        patch_size: int,
        d_model: int,
        rng: np.random.Generator,
        init_scale: float = 0.02,
    ):
        super().__init__()
        if image_size % patch_size != 0:
            raise DimensionError(f"image size {image_size} not divisible by patch size {patch_size}")
        self.patch_size = patch_size
        self.num_patches = (image_size // patch_size) ** 2
        self.proj = Linear(patch_size * patch_size * channels, d_model, rng)
        self.pos = Parameter(uniform_init(rng, (self.num_patches, d_model), init_scale))

    def forward(self, images: Tensor, modality: str = "visual") -> PatchSequence:
        _, h, w, _ = images.shape
        p = self.patch_size
        if h % p or w % p:
            raise DimensionError(f"input {h}×{w} not divisible by patch size {p}")
        if (h // p) * (w // p) != self.num_patches:
            raise DimensionError(f"input {h}×{w} gives {(h // p) * (w // p)} patches, expected {self.num_patches}")
        patches = ops.unfold2d(images, p, p)
        return PatchSequence(tokens=self.proj(patches) + self.pos, modality=modality)


class AudioCNN(Module):
    """Two strided unfold-and-project convolutions with GELU; each output position is a token."""

    def __init__(self, image_size: int, channels: int, patch_size: int, d_model: int, rng: np.random.Generator):
        super().__init__()
        self.k1 = max(patch_size // 2, 1)
        self.s1 = max(patch_size // 4, 1)
        self.k2, self.s2 = 3, 2
        self.h1 = (image_size - self.k1) // self.s1 + 1
        if self.h1 < self.k2:
            raise ConfigError(f"audio CNN input {image_size} too small for patch size {patch_size}")
        self.h2 = (self.h1 - self.k2) // self.s2 + 1
        self.conv1 = Linear(self.k1 * self.k1 * channels, d_model, rng)
        self.conv2 = Linear(self.k2 * self.k2 * d_model, d_model, rng)
        self.d_model = d_model

    @property
    def num_tokens(self) -> int:
        return self.h2 * self.h2

    def forward(self, images: Tensor) -> PatchSequence:
        b = images.shape[0]
        x = ops.gelu(self.conv1(ops.unfold2d(images, self.k1, self.s1)))
        x = ops.reshape(x, (b, self.h1, self.h1, self.d_model))
        x = ops.gelu(self.conv2(ops.unfold2d(x, self.k2, self.s2)))
        return PatchSequence(tokens=x, modality="audio")


# ---------------------------------------------------------------------- #
# Attention
# ---------------------------------------------------------------------- #
def dmtf_attention(q: Tensor, k: Tensor, v: Tensor) -> Tuple[Tensor, Tensor]:
    """
    Scaled dot-product attention ``softmax(Q Kᵀ / √d_k) V`` over the last two axes.

    Returns:
        ``(out, weights)`` with weights shaped ``[..., t_q, t_k]``.
    """
    d_k = q.shape[-1]
    if d_k == 0:
        raise ConfigError("attention key width d_k must be positive")
    if k.shape[-1] != d_k or k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"attention shapes disagree: Q{q.shape} K{k.shape} V{v.shape}")
    scores = ops.matmul(q, ops.transpose(k)) * (1.0 / math.sqrt(d_k))
    weights = ops.softmax_lastdim(scores)
    return ops.matmul(weights, v), weights


class MultiHeadAttention(Module):
    """``Concat(head_1..head_h) W^O`` with per-head Q/K/V projections."""

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if heads < 1 or d_model % heads != 0 or d_model // heads == 0:
            raise ConfigError(f"d_model={d_model} cannot be split into {heads} heads")
        self.d_model = d_model
        self.heads = heads
        self.d_k = d_model // heads
        self.wq = Linear(d_model, d_model, rng, bias=False)
        self.wk = Linear(d_model, d_model, rng, bias=False)
        self.wv = Linear(d_model, d_model, rng, bias=False)
        self.wo = Linear(d_model, d_model, rng, bias=False)

    def _split(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return ops.permute(ops.reshape(x, (b, t, self.heads, self.d_k)), (0, 2, 1, 3))

    def forward(self, queries: Tensor, keys: Tensor) -> Tuple[Tensor, Tensor]:
        """
        Args:
            queries: ``[B, t_q, d_model]``.
            keys: ``[B, t_k, d_model]``; also used as values.

        Returns:
            ``(out [B, t_q, d_model], weights [B, heads, t_q, t_k])``.
        """
        if queries.ndim != 3 or keys.ndim != 3 or queries.shape[0] != keys.shape[0]:
            raise DimensionError(f"attention expects [B, t, d] inputs, got {queries.shape} and {keys.shape}")
        q = self._split(self.wq(queries))
        k = self._split(self.wk(keys))
        v = self._split(self.wv(keys))
        heads_out, weights = dmtf_attention(q, k, v)
        b, _, t_q, _ = heads_out.shape
        merged = ops.reshape(ops.permute(heads_out, (0, 2, 1, 3)), (b, t_q, self.d_model))
        return self.wo(merged), weights


class FeedForward(Module):
    def __init__(self, d_model: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.fc1 = Linear(d_model, hidden, rng)
        self.fc2 = Linear(hidden, d_model, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class EncoderLayer(Module):
    """Pre-norm self-attention block followed by a pre-norm feed-forward block."""

    def __init__(self, d_model: int, heads: int, ffn_dim: int, rng: np.random.Generator, eps: float = 1e-5):
        super().__init__()
        self.norm1 = LayerNorm(d_model, eps)
        self.attn = MultiHeadAttention(d_model, heads, rng)
        self.norm2 = LayerNorm(d_model, eps)
        self.ffn = FeedForward(d_model, ffn_dim, rng)

    def forward(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        h = self.norm1(x)
        attended, weights = self.attn(h, h)
        x = x + attended
        return x + self.ffn(self.norm2(x)), weights


class DecoderLayer(Module):
    """Target self-attention, cross-attention into the fused memory, then feed-forward."""

    def __init__(self, d_model: int, heads: int, ffn_dim: int, rng: np.random.Generator, eps: float = 1e-5):
        super().__init__()
        self.norm1 = LayerNorm(d_model, eps)
        self.self_attn = MultiHeadAttention(d_model, heads, rng)
        self.norm2 = LayerNorm(d_model, eps)
        self.cross_attn = MultiHeadAttention(d_model, heads, rng)
        self.norm3 = LayerNorm(d_model, eps)
        self.ffn = FeedForward(d_model, ffn_dim, rng)

    def forward(self, targets: Tensor, memory: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        h = self.norm1(targets)
        attended, self_weights = self.self_attn(h, h)
        targets = targets + attended
        attended, cross_weights = self.cross_attn(self.norm2(targets), memory)
        targets = targets + attended
        return targets + self.ffn(self.norm3(targets)), self_weights, cross_weights


# ---------------------------------------------------------------------- #
# Fusion and pooling
# ---------------------------------------------------------------------- #
def fuse_concat(
    visual: PatchSequence,
    audio: Optional[PatchSequence],
    type_embedding: Tensor,
) -> FusedSequence:
    """Concatenate visual then audio tokens, each with its modality-type embedding."""
    vis = visual.tokens + type_embedding[0]
    boundary = vis.shape[-2]
    if audio is None:
        return FusedSequence(tokens=vis, boundary=boundary)
    if audio.tokens.shape[-1] != vis.shape[-1]:
        raise DimensionError(
            f"token widths differ: visual {vis.shape[-1]} vs audio {audio.tokens.shape[-1]}"
        )
    aud = audio.tokens + type_embedding[1]
    return FusedSequence(tokens=ops.concat([vis, aud], axis=-2), boundary=boundary)


def pool_slots(slots: Tensor) -> Tensor:
    """Mean over the slot axis: ``[B, N_t, d] -> [B, d]``."""
    return ops.mean(slots, axis=-2)


class SlotPooling(Module):
    """Pooled slots (optionally joined with a displacement embedding) projected to the GRU input."""

    def __init__(self, d_model: int, out_dim: int, rng: np.random.Generator, pointgoal: bool = False):
        super().__init__()
        self.pointgoal = pointgoal
        self.delta_embed: Optional[Linear] = None
        width = d_model
        if pointgoal:
            self.delta_embed = Linear(2, d_model, rng)
            width += d_model
        self.proj = Linear(width, out_dim, rng)

    def forward(self, pooled: Tensor, delta: Optional[Tensor] = None) -> Tensor:
        if self.pointgoal:
            if delta is None:
                raise DimensionError("pointgoal model needs a displacement input")
            pooled = ops.concat([pooled, self.delta_embed(delta)], axis=-1)
        return self.proj(pooled)


# ---------------------------------------------------------------------- #
# Recurrence
# ---------------------------------------------------------------------- #
class GRUCell(Module):
    """
    Gated recurrent unit::

        u  = σ(W_u x + U_u h + b_u)
        r  = σ(W_r x + U_r h + b_r)
        n  = tanh(W_n x + b_n + r ⊙ (U_n h + b_hn))
        h' = (1 − u) ⊙ h + u ⊙ n
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        super().__init__()
        self.hidden_size = hidden_size
        self.input_proj = Linear(input_size, 3 * hidden_size, rng)
        self.hidden_proj = Linear(hidden_size, 3 * hidden_size, rng, bias=False)
        self.hidden_bias = Parameter(np.zeros(hidden_size, dtype=self.input_proj.weight.dtype))

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        n_h = self.hidden_size
        gx = self.input_proj(x)
        gh = self.hidden_proj(h)
        u = ops.sigmoid(gx[..., :n_h] + gh[..., :n_h])
        r = ops.sigmoid(gx[..., n_h:2 * n_h] + gh[..., n_h:2 * n_h])
        n = ops.tanh(gx[..., 2 * n_h:] + r * (gh[..., 2 * n_h:] + self.hidden_bias))
        return h + u * (n - h)


def modality_importance(weights: List[np.ndarray], boundary: int) -> np.ndarray:
    """
    Relative visual/audio attention mass per batch element.

    Args:
        weights: Attention maps ``[B, heads, queries, keys]`` (one per layer).
        boundary: Index of the first audio key.

    Returns:
        ``[B, 2]`` array of ``(w_vis, w_aud)``, each row summing to 1.
    """
    if not weights:
        raise AnalysisError("no attention weights were captured")
    vis = np.zeros(weights[0].shape[0])
    aud = np.zeros(weights[0].shape[0])
    for w in weights:
        if w.shape[-1] < boundary:
            raise AnalysisError(f"boundary {boundary} exceeds key count {w.shape[-1]}")
        vis = vis + w[..., :boundary].sum(axis=-1).mean(axis=(1, 2))
        aud = aud + w[..., boundary:].sum(axis=-1).mean(axis=(1, 2))
    total = vis + aud
    w_vis = np.where(total > 0, vis / np.where(total > 0, total, 1.0), 0.5)
    return np.stack([w_vis, 1.0 - w_vis], axis=-1)
