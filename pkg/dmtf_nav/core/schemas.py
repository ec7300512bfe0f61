"""
Artifact Schemas
================

Pydantic records for every file the toolkit writes: episode suites, template
manifests, checkpoint manifests, metrics rows, evaluation reports, attention
and trajectory dumps, and ablation tables.
"""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

ROW_SUM_TOLERANCE = 1e-6


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid")


# Enums for artifact tags
class SuiteSplit(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class TemplateSplit(str, Enum):
    HEARD = "heard"
    UNHEARD = "unheard"


class AttentionModule(str, Enum):
    DECODER = "decoder"
    ENCODER_VISUAL = "encoder_visual"
    ENCODER_AUDIO = "encoder_audio"
    FUSION = "fusion"


# Episode suites
class EpisodeSpec(_Record):
    """One navigation episode with every seed spelled out."""

    episode_id: str
    map_seed: int = Field(ge=0)
    width: int = Field(ge=4)
    height: int = Field(ge=4)
    density: float = Field(ge=0.0, le=0.4)
    start: List[int] = Field(min_length=3, max_length=3, description="x, y, heading")
    source: List[int] = Field(min_length=2, max_length=2, description="x, y")
    template_id: int = Field(ge=0)
    max_steps: int = Field(default=500, gt=0)
    audio_seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _heading_is_cardinal(self) -> "EpisodeSpec":
        if not 0 <= self.start[2] <= 3:
            raise ValueError(f"start heading must be 0..3, got {self.start[2]}")
        return self


class SuiteFile(_Record):
    suite_id: str
    split: SuiteSplit
    template_split: TemplateSplit
    manifest: Optional[str] = None
    episodes: List[EpisodeSpec] = Field(min_length=1)

    @model_validator(mode="after")
    def _unique_ids(self) -> "SuiteFile":
        ids = [ep.episode_id for ep in self.episodes]
        if len(ids) != len(set(ids)):
            raise ValueError("episode ids must be unique within a suite")
        return self


class TemplateManifest(_Record):
    """Partition of sound-template ids into heard and unheard sets."""

    seed: int
    count: int = Field(ge=1)
    num_bands: int = Field(ge=1)
    split_fraction: float = Field(ge=0.0, le=1.0)
    heard_ids: List[int]
    unheard_ids: List[int]

    @model_validator(mode="after")
    def _partition(self) -> "TemplateManifest":
        heard, unheard = set(self.heard_ids), set(self.unheard_ids)
        if heard & unheard:
            raise ValueError(f"heard/unheard overlap: {sorted(heard & unheard)}")
        if heard | unheard != set(range(self.count)):
            raise ValueError("heard/unheard ids must partition 0..count-1")
        return self


# Checkpoints
class TensorEntry(_Record):
    name: str
    shape: List[int]
    dtype: str = Field(pattern="^(float32|float64)$")
    byte_offset: int = Field(ge=0)


class CheckpointManifest(_Record):
    format: str = "dmtf-ckpt"
    version: int = 1
    tensors: List[TensorEntry]
    metadata: Dict[str, Any] = Field(default_factory=dict)


# Training metrics
class MetricsRow(_Record):
    update: int = Field(ge=1)
    env_steps: int = Field(ge=0)
    mean_return: float
    surrogate: float
    value_loss: float
    entropy: float
    matching_loss: float
    match_cost: float
    null_fraction: float
    sr_val: Optional[float] = None
    spl_val: Optional[float] = None
    sna_val: Optional[float] = None


# Evaluation reports
class EpisodeReportRow(_Record):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    episode_id: str
    S: int = Field(ge=0, le=1)
    l: int = Field(ge=0)
    p: int = Field(ge=0)
    a: int = Field(ge=0)
    a_star: int = Field(ge=0)
    episode_return: float = Field(alias="return")


class ReportSummary(_Record):
    sr: float = Field(ge=0.0, le=1.0)
    spl: float = Field(ge=0.0, le=1.0)
    sna: float = Field(ge=0.0, le=1.0)
    sna_normalized: float = Field(ge=0.0, le=1.0)
    split: TemplateSplit
    ablation: str
    suite_id: str
    num_episodes: int = Field(ge=1)
    agent: str = "dmtf"

    @model_validator(mode="after")
    def _bounded_by_success(self) -> "ReportSummary":
        if self.spl > self.sr + 1e-12 or self.sna > self.sr + 1e-12:
            raise ValueError(f"SPL/SNA exceed SR: sr={self.sr} spl={self.spl} sna={self.sna}")
        return self


# Analysis dumps
class AttentionRecord(_Record):
    episode: str
    t: int = Field(ge=0)
    module: AttentionModule = AttentionModule.DECODER
    layer: int = Field(ge=0)
    head: int = Field(ge=0)
    slot: int = Field(ge=0)
    weights: List[float] = Field(min_length=1)
    boundary: int = Field(ge=0)

    @model_validator(mode="after")
    def _row_normalized(self) -> "AttentionRecord":
        total = sum(self.weights)
        if abs(total - 1.0) > ROW_SUM_TOLERANCE:
            raise ValueError(f"attention row sums to {total}")
        if min(self.weights) < 0.0 or max(self.weights) > 1.0:
            raise ValueError("attention weights must lie in [0, 1]")
        return self


class TrajectoryRecord(_Record):
    episode: str
    t: int = Field(ge=0)
    pose: List[int] = Field(min_length=3, max_length=3)
    action: int = Field(ge=0, le=3)
    reward: float
    geodesic: int = Field(ge=0)
    w_vis: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    w_aud: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    done: bool

    @model_validator(mode="after")
    def _importance_normalized(self) -> "TrajectoryRecord":
        if (self.w_vis is None) != (self.w_aud is None):
            raise ValueError("w_vis and w_aud must be both present or both null")
        if self.w_vis is not None and abs(self.w_vis + self.w_aud - 1.0) > 1e-12:
            raise ValueError(f"w_vis + w_aud = {self.w_vis + self.w_aud}")
        return self


# Ablations
class AblationRow(_Record):
    variant: str
    sna_heard: Optional[float] = None
    sr_heard: Optional[float] = None
    spl_heard: Optional[float] = None
    sna_unheard: Optional[float] = None
    sr_unheard: Optional[float] = None
    spl_unheard: Optional[float] = None
    seeds: List[int] = Field(default_factory=list)
    error: Optional[str] = None


class AblationSummary(_Record):
    rows: List[AblationRow]
    heard_suite: str
    unheard_suite: Optional[str] = None
    seeds: List[int]
