"""
Exception hierarchy for the NAFD simulation laboratory.

Every failure the engine can report on purpose derives from NafdError, which
carries a machine-readable error code and optional details so the CLI and the
HTTP job server can render it the same way.
"""

from typing import Any, Dict, Optional


class NafdError(Exception):
    """Base class for all domain errors raised by the laboratory."""

    error_code = "NAFD_ERROR"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-friendly view of the error."""
        return {
            "message": self.message,
            "error_code": self.error_code,
            "details": self.details,
        }


class DomainError(NafdError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    error_code = "DOMAIN_ERROR"


class GeometryInfeasibleError(NafdError):
    """Node placement could not satisfy the protection distance."""

    error_code = "GEOMETRY_INFEASIBLE"


class CapacityError(NafdError):
    """A requested matrix would exceed the configured memory cap."""

    error_code = "CAPACITY_EXCEEDED"


class NoSignalDirectionError(NafdError):
    """Water-filling found no eigen-direction carrying signal energy."""

    error_code = "NO_SIGNAL_DIRECTION"


class PilotContaminationError(NafdError):
    """Pilot length is shorter than the number of users sharing it."""

    error_code = "PILOT_CONTAMINATION_UNSUPPORTED"


class SingularChannelError(NafdError):
    """A stacked channel matrix is too ill-conditioned for zero-forcing."""

    error_code = "SINGULAR_CHANNEL"


class DegeneratePrecoderError(NafdError):
    """Every precoder is zero, so no power scaling is defined."""

    error_code = "DEGENERATE_PRECODER"


class TrainingDivergenceError(NafdError):
    """A loss became non-finite during training."""

    error_code = "TRAINING_DIVERGENCE"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None,
                 checkpoint_path: Optional[str] = None):
        super().__init__(message, details)
        self.checkpoint_path = checkpoint_path
        if checkpoint_path:
            self.details["checkpoint_path"] = checkpoint_path


class CheckpointError(NafdError):
    """A checkpoint is missing, unreadable or of an incompatible schema."""

    error_code = "CHECKPOINT_ERROR"


class ChannelMismatchError(NafdError):
    """Compared schemes were evaluated on different channel realizations."""

    error_code = "CHANNEL_MISMATCH"
