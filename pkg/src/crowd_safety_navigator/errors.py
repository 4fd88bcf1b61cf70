"""Exception hierarchy for crowd navigation runs."""

from pathlib import Path


class CrowdNavError(Exception):
    """Base class for every error raised by this package."""


class InputValidationError(CrowdNavError, ValueError):
    """Raised when an operation receives malformed or non-finite input."""


class ShapeMismatchError(InputValidationError):
    """Raised when array shapes disagree with the configured network or bank."""


class EpisodeTerminatedError(CrowdNavError, RuntimeError):
    """Raised when stepping an episode that already reached a terminal event."""


class ScenarioError(CrowdNavError):
    """Raised when a scenario cannot be spawned (e.g. placement keeps overlapping)."""


class ErrorNotMeasurable(CrowdNavError, LookupError):
    """Raised when no prediction of the requested lag exists yet."""


class CheckpointError(CrowdNavError):
    """Raised for missing, unreadable or mismatched policy checkpoints."""


class TraceFormatError(CrowdNavError):
    """Raised when a trace record violates the trace contract."""


class TrainingDivergedError(CrowdNavError, FloatingPointError):
    """Raised when a training loss becomes non-finite."""

    def __init__(self, message: str, dump_path: Path | None = None) -> None:
        super().__init__(message)
        self.dump_path = dump_path
