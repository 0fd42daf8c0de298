"""Exception hierarchy shared by every module."""


class ReachPFError(Exception):
    """Base class for all package errors."""


class InvalidCommandError(ReachPFError, ValueError):
    """A velocity command had non-finite components."""


class SafetyMarginBreached(ReachPFError):
    """The robot is within the safety threshold of a reach-tube slice."""

    def __init__(self, distance: float, delta: float):
        super().__init__(f"distance to tube {distance:.6g} m <= safety threshold {delta:.6g} m")
        self.distance = distance
        self.delta = delta


class OutOfDomainError(ReachPFError):
    """A network query fell outside the domain it was trained on."""


class TrainingDiverged(ReachPFError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


class ModelFormatError(ReachPFError):
    """A model or dataset file could not be parsed."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(ModelFormatError):
    """A file declares a format version this package cannot read."""
