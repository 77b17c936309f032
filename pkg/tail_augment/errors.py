"""
Exception types shared across the package.

Validation problems (bad files, bad arguments) and numerical problems
(divergence, non-convergence) are kept apart so the CLI can map them to
distinct exit codes.
"""

from typing import Optional


class TailAugmentError(Exception):
    """Base class for every error raised by tail_augment."""

    stage: Optional[str] = None


class ValidationError(TailAugmentError, ValueError):
    """Input data or arguments violate a documented contract."""


class ParseError(ValidationError):
    """A file does not conform to its format."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None and line is not None:
            where = f"{path}:{line}: "
        elif path is not None:
            where = f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(f"{where}{message}")


class ShapeError(ValidationError):
    """Array dimensions do not agree."""


class FeatureLookupError(ValidationError):
    """A document id has no row in a feature file."""


class CheckpointError(ValidationError):
    """A checkpoint is corrupt or truncated."""


class IncompatibleCheckpointError(CheckpointError):
    """A checkpoint was written by an unsupported format version."""


class NumericalError(TailAugmentError, RuntimeError):
    """A numerical routine failed to produce a finite or converged result."""


class TrainingError(NumericalError):
    """Training diverged."""

    def __init__(self, message: str, epoch: Optional[int] = None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)


class StateError(TailAugmentError, RuntimeError):
    """An operation was called before the state it depends on exists."""