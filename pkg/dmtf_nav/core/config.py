"""
DMTF Nav Configuration
======================

Configuration models for the network, the PPO trainer, the grid-world
environment and complete runs. Every model rejects unknown keys.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Type, TypeVar, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

C = TypeVar("C", bound="_ConfigBase")

ABLATIONS = ("none", "no-pe", "no-mti", "no-ensa")
FUSIONS = ("dmtf", "concat", "mean", "mul", "self_attention")
LR_PROFILES = {"small-scene": 1e-4, "large-scene": 5e-5}
THREADS_ENV = "DMTF_THREADS"


def _format_validation_error(err: ValidationError) -> str:
    parts = []
    for item in err.errors():
        field = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{field}: {item['msg']}")
    return "; ".join(parts)


class _ConfigBase(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    @classmethod
    def from_dict(cls: Type[C], data: Dict[str, Any], source: str = "<dict>") -> C:
        """Validate a raw mapping, reporting failures as ConfigError with field names."""
        try:
            return cls.model_validate(data or {})
        except ValidationError as e:
            raise ConfigError(f"{source}: {_format_validation_error(e)}") from e

    @classmethod
    def from_yaml(cls: Type[C], config_path: Union[str, Path]) -> C:
        """Load configuration from YAML file."""
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                config_dict = yaml.safe_load(f)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"Cannot read config {config_path}: {e}") from e
        return cls.from_dict(config_dict, str(config_path))

    @classmethod
    def from_json(cls: Type[C], config_path: Union[str, Path]) -> C:
        """Load configuration from JSON file."""
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                config_dict = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config {config_path}: {e}") from e
        return cls.from_dict(config_dict, str(config_path))

    @classmethod
    def from_file(cls: Type[C], config_path: Union[str, Path]) -> C:
        suffix = Path(config_path).suffix.lower()
        if suffix in (".yaml", ".yml"):
            return cls.from_yaml(config_path)
        if suffix == ".json":
            return cls.from_json(config_path)
        raise ConfigError(f"Unsupported config extension '{suffix}' for {config_path}")

    def save_yaml(self, config_path: Union[str, Path]) -> None:
        """Save configuration to YAML file."""
        with open(config_path, "w", encoding="utf-8") as f:
            yaml.safe_dump(self.model_dump(mode="json"), f, default_flow_style=False, sort_keys=False)

    def save_json(self, config_path: Union[str, Path]) -> None:
        """Save configuration to JSON file."""
        with open(config_path, "w", encoding="utf-8") as f:
            json.dump(self.model_dump(mode="json"), f, indent=2)


class ModelConfig(_ConfigBase):
    """Network dimensions, ablation switches and fusion mode."""

    # Inputs
    image_size: int = Field(default=64, gt=0)
    image_channels: int = Field(default=3, gt=0)
    patch_size: int = Field(default=16, gt=0)

    # Transformer
    d_model: int = Field(default=128, gt=0)
    heads: int = Field(default=4, gt=0)
    encoder_layers: int = Field(default=2, ge=0)
    decoder_layers: int = Field(default=2, gt=0)
    ffn_dim: Optional[int] = Field(default=None, gt=0)
    num_targets: int = Field(default=8, ge=1)
    layer_norm_eps: float = Field(default=1e-5, gt=0)
    init_scale: float = Field(default=0.02, gt=0)

    # Recurrent state and heads
    gru_hidden: int = Field(default=512, gt=0)
    num_actions: Literal[4] = 4
    num_modalities: Literal[2] = 2

    # Ablations and variants
    no_pe: bool = False
    no_mti: bool = False
    no_ensa: bool = False
    fusion: Literal["dmtf", "concat", "mean", "mul", "self_attention"] = "dmtf"
    pointgoal: bool = False

    dtype: Literal["float32", "float64"] = "float64"

    @model_validator(mode="after")
    def _check_shapes(self) -> "ModelConfig":
        if self.d_model % self.heads != 0:
            raise ValueError(f"d_model ({self.d_model}) must be divisible by heads ({self.heads})")
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size ({self.image_size}) must be divisible by patch_size ({self.patch_size})"
            )
        return self

    def check_ablations(self) -> None:
        """Reject flag combinations with no meaning."""
        if self.no_mti and self.fusion != "dmtf":
            raise ConfigError(
                f"no_mti forces a single target slot but fusion={self.fusion!r} has no target slots"
            )

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads

    @property
    def effective_targets(self) -> int:
        return 1 if self.no_mti else self.num_targets

    @property
    def effective_encoder_layers(self) -> int:
        return 0 if self.no_ensa else self.encoder_layers

    @property
    def feedforward_dim(self) -> int:
        return self.ffn_dim or 4 * self.d_model

    @property
    def uses_slots(self) -> bool:
        return self.fusion == "dmtf"

    @property
    def ablation(self) -> str:
        flags = [name for name, on in (("no-pe", self.no_pe), ("no-mti", self.no_mti), ("no-ensa", self.no_ensa)) if on]
        return "+".join(flags) if flags else "none"

    def with_ablation(self, ablation: str) -> "ModelConfig":
        if ablation not in ABLATIONS:
            raise ConfigError(f"Unknown ablation '{ablation}', expected one of {ABLATIONS}")
        update = {
            "no-pe": {"no_pe": True},
            "no-mti": {"no_mti": True},
            "no-ensa": {"no_ensa": True},
        }.get(ablation, {})
        cfg = self.model_copy(update=update)
        cfg.check_ablations()
        return cfg


class PPOConfig(_ConfigBase):
    """Recurrent PPO hyperparameters."""

    epochs: int = Field(default=4, gt=0)
    clip: float = Field(default=0.1, gt=0)
    value_coef: float = Field(default=0.5, ge=0)
    entropy_coef: float = Field(default=0.01, ge=0)
    gamma: float = Field(default=0.99, gt=0, le=1)
    gae_lambda: float = Field(default=0.95, ge=0, le=1)
    lr: Optional[float] = Field(default=None, gt=0)
    lr_profile: Literal["small-scene", "large-scene"] = "small-scene"
    updates: int = Field(default=100, gt=0)
    episodes_per_update: int = Field(default=16, gt=0)
    horizon: int = Field(default=500, gt=0, le=500)
    minibatch_episodes: int = Field(default=4, gt=0)
    match_coef: float = Field(default=0.1, ge=0)
    max_grad_norm: float = Field(default=0.5, ge=0)
    workers: int = Field(default=4, gt=0)
    checkpoint_interval: int = Field(default=10, gt=0)
    eval_interval: int = Field(default=10, gt=0)
    eval_episodes: Optional[int] = Field(default=None, gt=0)

    @property
    def learning_rate(self) -> float:
        return self.lr if self.lr is not None else LR_PROFILES[self.lr_profile]


class EnvConfig(_ConfigBase):
    """Grid-world sensor and reward settings."""

    image_size: int = Field(default=64, gt=0)
    view_size: int = Field(default=7, ge=3)
    audio_bands: int = Field(default=64, gt=0)
    audio_frames: int = Field(default=64, gt=0)
    noise_scale: float = Field(default=0.01, ge=0, le=0.01)
    success_radius: int = Field(default=1, ge=0)
    success_reward: float = 10.0
    step_penalty: float = Field(default=0.01, ge=0)
    modality_distance_scale: float = Field(default=10.0, gt=0)
    pointgoal: bool = False

    @model_validator(mode="after")
    def _odd_view(self) -> "EnvConfig":
        if self.view_size % 2 == 0:
            raise ValueError(f"view_size must be odd so the agent column is centred, got {self.view_size}")
        return self


class SuitePaths(_ConfigBase):
    train: str
    val: Optional[str] = None
    val_unheard: Optional[str] = None
    test: Optional[str] = None
    test_unheard: Optional[str] = None
    manifest: Optional[str] = None


class RunConfig(_ConfigBase):
    """Everything a training or evaluation run needs, validated up front."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    ppo: PPOConfig = Field(default_factory=PPOConfig)
    env: EnvConfig = Field(default_factory=EnvConfig)
    suites: SuitePaths
    output_dir: str = "runs/default"
    seed: int = Field(default=0, ge=0)
    log_level: str = "INFO"

    @model_validator(mode="after")
    def _cross_section(self) -> "RunConfig":
        if self.model.image_size != self.env.image_size:
            raise ValueError(
                f"model.image_size ({self.model.image_size}) != env.image_size ({self.env.image_size})"
            )
        if self.model.pointgoal != self.env.pointgoal:
            raise ValueError("model.pointgoal and env.pointgoal must agree")
        self.model.check_ablations()
        return self

    @classmethod
    def from_file(cls, config_path: Union[str, Path]) -> "RunConfig":
        cfg = super().from_file(config_path)
        base = Path(config_path).resolve().parent
        cfg.suites = cfg.suites.model_copy(
            update={
                k: _resolve(base, v)
                for k, v in cfg.suites.model_dump().items()
                if v is not None
            }
        )
        return cfg

    def with_ablation(self, ablation: str) -> "RunConfig":
        return self.model_copy(update={"model": self.model.with_ablation(ablation)})


def _resolve(base: Path, value: str) -> str:
    path = Path(value)
    return str(path if path.is_absolute() else (base / path))


def worker_count(requested: int) -> int:
    """Cap a worker count by the DMTF_THREADS environment variable."""
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return max(1, requested)
    try:
        cap = int(raw)
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from e
    if cap < 1:
        raise ConfigError(f"{THREADS_ENV} must be ≥ 1, got {cap}")
    return max(1, min(requested, cap))
