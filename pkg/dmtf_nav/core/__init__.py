"""
Core Module - Configuration, Errors and the DMTF Network
========================================================

Network and matching code live in ``core.model``, ``core.layers`` and
``core.matching``; they are imported from their modules directly because
they depend on ``ndgrad``, which itself imports ``core.errors``.
"""

from .config import EnvConfig, ModelConfig, PPOConfig, RunConfig, SuitePaths
from .errors import (
    AnalysisError,
    CheckpointError,
    ConfigError,
    DataError,
    DimensionError,
    DMTFError,
    EpisodeSetupError,
    GradientError,
    MapGenerationError,
    NumericError,
    ProtocolError,
    TrainingError,
)

__all__ = [
    "ModelConfig",
    "PPOConfig",
    "EnvConfig",
    "SuitePaths",
    "RunConfig",
    "DMTFError",
    "ConfigError",
    "DataError",
    "ProtocolError",
    "EpisodeSetupError",
    "MapGenerationError",
    "CheckpointError",
    "AnalysisError",
    "DimensionError",
    "NumericError",
    "TrainingError",
    "GradientError",
]
