"""
DMTF Policy Network
===================

Main model class: both modalities are patch-embedded and encoded, fused into
one token sequence, and read out by a set of learned target queries through
cross-attention. Pooled slots drive a GRU whose state feeds the actor and
critic heads.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from ..ndgrad import ops
from ..ndgrad.checkpoint import load_checkpoint, save_checkpoint
from ..ndgrad.nn import LayerNorm, Linear, Module, ModuleList, Parameter, uniform_init
from ..ndgrad.tensor import Tensor, default_dtype
from .config import ModelConfig
from .errors import CheckpointError, ConfigError, DimensionError
from .layers import (
    AudioCNN,
    DecoderLayer,
    EncoderLayer,
    FusedSequence,
    GRUCell,
    PatchEmbedding,
    PatchSequence,
    SlotPooling,
    fuse_concat,
    modality_importance,
    pool_slots,
    prep_audio,
)

logger = logging.getLogger(__name__)

NULL_CLASS = 4
OPTIMIZER_PREFIX = "adam."


@dataclass
class Perception:
    """Per-step encoding before the recurrent core."""

    embedding: Tensor
    boundary: int
    slots: Optional[Tensor] = None
    class_logits: Optional[Tensor] = None
    modality: Optional[Tensor] = None
    decoder_attention: List[np.ndarray] = field(default_factory=list)
    encoder_attention: Dict[str, List[np.ndarray]] = field(default_factory=dict)
    importance: Optional[np.ndarray] = None


@dataclass
class PolicyOutput:
    """
    Everything one forward pass produces.

    ``probs``/``log_probs`` are ``[B, 4]``, ``value`` is ``[B]`` and ``hidden``
    is the new GRU state ``[B, gru_hidden]`` (``s_t = h_t``).
    """

    probs: Tensor
    log_probs: Tensor
    value: Tensor
    hidden: Tensor
    perception: Perception

    @property
    def importance(self) -> Optional[np.ndarray]:
        return self.perception.importance


class DMTFNet(Module):
    """
    Audio-visual navigation policy.

    Args:
        config: Network dimensions, fusion mode and ablation switches.
        seed: Seed for parameter initialization.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        config.check_ablations()
        self.config = config
        self.seed = seed
        with default_dtype(config.dtype):
            self._build(np.random.default_rng(seed))
        logger.debug(
            f"Built DMTFNet fusion={config.fusion} ablation={config.ablation} "
            f"params={self.num_parameters():,}"
        )

    def _build(self, rng: np.random.Generator) -> None:
        cfg = self.config
        d = cfg.d_model
        size, channels, patch = cfg.image_size, cfg.image_channels, cfg.patch_size

        self.visual_embed = PatchEmbedding(size, channels, patch, d, rng, cfg.init_scale)
        if cfg.no_pe:
            self.audio_embed = AudioCNN(size, channels, patch, d, rng)
        else:
            self.audio_embed = PatchEmbedding(size, channels, patch, d, rng, cfg.init_scale)

        layers = cfg.effective_encoder_layers
        ffn, eps = cfg.feedforward_dim, cfg.layer_norm_eps
        self.visual_encoder = ModuleList([EncoderLayer(d, cfg.heads, ffn, rng, eps) for _ in range(layers)])
        self.audio_encoder = ModuleList([EncoderLayer(d, cfg.heads, ffn, rng, eps) for _ in range(layers)])

        if cfg.fusion in ("dmtf", "self_attention"):
            self.type_embedding = Parameter(uniform_init(rng, (cfg.num_modalities, d), cfg.init_scale))
        if cfg.fusion == "dmtf":
            self.queries = Parameter(uniform_init(rng, (cfg.effective_targets, d), cfg.init_scale))
            self.decoder = ModuleList(
                [DecoderLayer(d, cfg.heads, ffn, rng, eps) for _ in range(cfg.decoder_layers)]
            )
            self.final_norm = LayerNorm(d, eps)
            self.class_head = Linear(d, cfg.num_actions + 1, rng)
            self.modality_head = Linear(d, cfg.num_modalities, rng)
        elif cfg.fusion == "concat":
            self.fusion_proj = Linear(2 * d, d, rng)
        elif cfg.fusion == "self_attention":
            self.fusion_layer = EncoderLayer(d, cfg.heads, ffn, rng, eps)

        self.pool = SlotPooling(d, d, rng, pointgoal=cfg.pointgoal)
        self.gru = GRUCell(d, cfg.gru_hidden, rng)
        self.actor = Linear(cfg.gru_hidden, cfg.num_actions, rng, gain=0.01)
        self.critic = Linear(cfg.gru_hidden, 1, rng)

    # ------------------------------------------------------------------ #
    # Inputs
    # ------------------------------------------------------------------ #
    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.config.dtype)

    def initial_state(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.config.gru_hidden), dtype=self.dtype)

    def prepare_inputs(
        self,
        visual: np.ndarray,
        audio: np.ndarray,
        delta: Optional[np.ndarray] = None,
    ) -> Tuple[Tensor, Tensor, Optional[Tensor]]:
        """Batch raw sensor arrays into constant tensors of the model dtype."""
        cfg = self.config
        visual = np.asarray(visual, dtype=self.dtype)
        if visual.ndim == 3:
            visual = visual[None]
        expected = (cfg.image_size, cfg.image_size, cfg.image_channels)
        if visual.ndim != 4 or visual.shape[1:] != expected:
            raise DimensionError(f"visual input {visual.shape} does not match [B, {expected}]")
        audio = prep_audio(np.asarray(audio, dtype=self.dtype), cfg.image_size, cfg.image_size, cfg.image_channels)
        if audio.ndim == 3:
            audio = audio[None]
        if audio.shape[0] != visual.shape[0]:
            raise DimensionError(f"batch sizes differ: visual {visual.shape[0]} vs audio {audio.shape[0]}")
        delta_t = None
        if cfg.pointgoal:
            if delta is None:
                raise DimensionError("pointgoal model needs a displacement input")
            delta = np.asarray(delta, dtype=self.dtype).reshape(visual.shape[0], 2)
            delta_t = Tensor(delta)
        return Tensor(visual), Tensor(audio), delta_t

    # ------------------------------------------------------------------ #
    # Forward pieces
    # ------------------------------------------------------------------ #
    def _encode(self, seq: PatchSequence, encoder: ModuleList) -> Tuple[PatchSequence, List[np.ndarray]]:
        tokens = seq.tokens
        maps = []
        for layer in encoder:
            tokens, weights = layer(tokens)
            maps.append(weights.data)
        return PatchSequence(tokens=tokens, modality=seq.modality), maps

    def perceive(self, visual: Tensor, audio: Tensor, delta: Optional[Tensor] = None) -> Perception:
        """Embed, encode and fuse one batch of observations into the GRU input ``e_t``."""
        cfg = self.config
        vis, vis_maps = self._encode(self.visual_embed(visual, "visual"), self.visual_encoder)
        aud_seq = self.audio_embed(audio) if cfg.no_pe else self.audio_embed(audio, "audio")
        aud, aud_maps = self._encode(aud_seq, self.audio_encoder)
        encoder_maps = {"encoder_visual": vis_maps, "encoder_audio": aud_maps}

        if cfg.fusion == "dmtf":
            fused = fuse_concat(vis, aud, self.type_embedding)
            return self._decode(fused, delta, encoder_maps)

        boundary = vis.patch_count
        importance = None
        if cfg.fusion == "self_attention":
            fused = fuse_concat(vis, aud, self.type_embedding)
            tokens, weights = self.fusion_layer(fused.tokens)
            pooled = pool_slots(tokens)
            importance = modality_importance([weights.data], fused.boundary)
        else:
            v = pool_slots(vis.tokens)
            a = pool_slots(aud.tokens)
            if cfg.fusion == "concat":
                pooled = self.fusion_proj(ops.concat([v, a], axis=-1))
            elif cfg.fusion == "mean":
                pooled = (v + a) * 0.5
            else:
                pooled = v * a
        return Perception(
            embedding=self.pool(pooled, delta),
            boundary=boundary,
            encoder_attention=encoder_maps,
            importance=importance,
        )

    def _decode(
        self,
        fused: FusedSequence,
        delta: Optional[Tensor],
        encoder_maps: Dict[str, List[np.ndarray]],
    ) -> Perception:
        batch = fused.tokens.shape[0]
        targets = ops.expand_batch(self.queries, batch)
        cross_maps = []
        for layer in self.decoder:
            targets, _, cross = layer(targets, fused.tokens)
            cross_maps.append(cross.data)
        slots = self.final_norm(targets)
        return Perception(
            embedding=self.pool(pool_slots(slots), delta),
            boundary=fused.boundary,
            slots=slots,
            class_logits=self.class_head(slots),
            modality=ops.sigmoid(self.modality_head(slots)),
            decoder_attention=cross_maps,
            encoder_attention=encoder_maps,
            importance=modality_importance(cross_maps, fused.boundary),
        )

    def recur(self, embedding: Tensor, hidden: Union[Tensor, np.ndarray]) -> Tensor:
        if not isinstance(hidden, Tensor):
            hidden = Tensor(np.asarray(hidden, dtype=self.dtype))
        if hidden.shape != (embedding.shape[0], self.config.gru_hidden):
            raise DimensionError(
                f"hidden state {hidden.shape} does not match [{embedding.shape[0]}, {self.config.gru_hidden}]"
            )
        return self.gru(embedding, hidden)

    def heads(self, hidden: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        """Actor and critic on ``s_t``: ``(probs, log_probs, value)``."""
        logits = self.actor(hidden)
        value = self.critic(hidden)
        return (
            ops.softmax_lastdim(logits),
            ops.log_softmax(logits),
            ops.reshape(value, (hidden.shape[0],)),
        )

    def forward(
        self,
        visual: np.ndarray,
        audio: np.ndarray,
        delta: Optional[np.ndarray] = None,
        hidden: Optional[Union[Tensor, np.ndarray]] = None,
    ) -> PolicyOutput:
        """
        One recurrent step for a batch of observations.

        Args:
            visual: ``[B, H, W, C]`` (or unbatched ``[H, W, C]``) images.
            audio: ``[B, F, T, 2]`` (or ``[F, T, 2]``) spectrograms.
            delta: ``[B, 2]`` displacements, required in pointgoal mode.
            hidden: Previous GRU state; zeros when omitted.
        """
        vis, aud, dlt = self.prepare_inputs(visual, audio, delta)
        perception = self.perceive(vis, aud, dlt)
        if hidden is None:
            hidden = self.initial_state(vis.shape[0])
        h = self.recur(perception.embedding, hidden)
        probs, log_probs, value = self.heads(h)
        return PolicyOutput(probs=probs, log_probs=log_probs, value=value, hidden=h, perception=perception)

    # ------------------------------------------------------------------ #
    # Snapshots and persistence
    # ------------------------------------------------------------------ #
    def snapshot(self) -> "DMTFNet":
        """A read-only copy of the current parameters for rollout workers."""
        clone = DMTFNet(self.config, self.seed)
        clone.load_state_dict(self.state_dict())
        for p in clone.parameters():
            p.data.flags.writeable = False
        return clone

    def save(
        self,
        path: Union[str, Path],
        extra_tensors: Optional[Mapping[str, np.ndarray]] = None,
        metadata: Optional[Dict[str, Any]] = None,
    ) -> Path:
        """Write parameters (plus any optimizer tensors) and the model config."""
        tensors: Dict[str, np.ndarray] = dict(self.state_dict())
        for name, array in (extra_tensors or {}).items():
            if not name.startswith(OPTIMIZER_PREFIX):
                raise CheckpointError(f"Extra tensor '{name}' must use the '{OPTIMIZER_PREFIX}' prefix")
            tensors[name] = array
        meta = {
            "model_config": self.config.model_dump(mode="json"),
            "num_targets_effective": self.config.effective_targets,
            "encoder_layers_effective": self.config.effective_encoder_layers,
            "seed": self.seed,
        }
        meta.update(metadata or {})
        return save_checkpoint(path, tensors, meta)

    def load_weights(self, path: Union[str, Path]) -> Dict[str, Any]:
        """Load parameters from a checkpoint into this model; returns its metadata."""
        tensors, metadata = load_checkpoint(path)
        self.load_state_dict({k: v for k, v in tensors.items() if not k.startswith(OPTIMIZER_PREFIX)})
        return metadata

    @classmethod
    def from_checkpoint(
        cls,
        path: Union[str, Path],
        config: Optional[ModelConfig] = None,
    ) -> Tuple["DMTFNet", Dict[str, np.ndarray], Dict[str, Any]]:
        """
        Rebuild a model from a checkpoint.

        Returns:
            ``(model, optimizer_tensors, metadata)``.

        Raises:
            CheckpointError: if the stored config is missing or a tensor does
                not fit ``config``.
        """
        tensors, metadata = load_checkpoint(path)
        if config is None:
            raw = metadata.get("model_config")
            if raw is None:
                raise CheckpointError(f"{path}: manifest carries no model_config")
            try:
                config = ModelConfig.from_dict(raw, f"{path} model_config")
            except ConfigError as e:
                raise CheckpointError(str(e)) from e
        model = cls(config, int(metadata.get("seed", 0)))
        model.load_state_dict({k: v for k, v in tensors.items() if not k.startswith(OPTIMIZER_PREFIX)})
        optimizer = {k: v for k, v in tensors.items() if k.startswith(OPTIMIZER_PREFIX)}
        logger.info(f"📂 Loaded {Path(path).name} ({model.num_parameters():,} parameters)")
        return model, optimizer, metadata
