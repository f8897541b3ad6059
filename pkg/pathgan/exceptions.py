# Exception hierarchy for the PathGAN planner
from typing import Any, Dict, Optional


class PathGANError(Exception):
    """Base class for all planner errors"""


class InvalidInputError(PathGANError, ValueError):
    """Input violates an operation's preconditions"""


class InsufficientLengthError(InvalidInputError):
    """Trajectory too short to yield a path of the requested length"""


class GenerationError(PathGANError):
    """Scene specification cannot be realised"""


class ConfigError(PathGANError, ValueError):
    """Experiment configuration is invalid"""


class ContractError(PathGANError):
    """Operation called on a component that does not support it"""


class CheckpointError(PathGANError):
    """Checkpoint archive is missing, malformed or incompatible"""


class TrainingAbortedError(PathGANError, RuntimeError):
    """Training hit a non-finite loss or parameter"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{key}={value}" for key, value in self.diagnostics.items())
        return f"{base} ({details})"
