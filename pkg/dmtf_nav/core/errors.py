"""
Error Hierarchy
===============

Exceptions raised across the package. Each class carries the process exit code
the CLI reports when it escapes a command.
"""


class DMTFError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(DMTFError):
    """Invalid or contradictory configuration."""

    exit_code = 2


class DataError(DMTFError):
    """Malformed input data or artifacts."""

    exit_code = 3


class ProtocolError(DataError):
    """An environment or evaluation protocol was violated."""


class EpisodeSetupError(DataError):
    """An episode spec cannot be instantiated."""


class MapGenerationError(DataError):
    """No connected map could be generated for the requested parameters."""


class CheckpointError(DataError):
    """A checkpoint is unreadable or does not match the model."""


class AnalysisError(DataError):
    """Attention analysis was requested without captured weights."""


class DimensionError(DMTFError, ValueError):
    """Tensor or array shapes are inconsistent."""

    exit_code = 3


class NumericError(DMTFError, ArithmeticError):
    """A value became NaN or infinite, or a numeric precondition failed."""

    exit_code = 4


class TrainingError(NumericError):
    """Optimization diverged."""


class GradientError(DMTFError, RuntimeError):
    """The gradient tape was used incorrectly."""
