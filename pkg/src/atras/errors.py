"""Exception types shared across the package."""


class AtrasError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(AtrasError):
    """Operand shapes are incompatible for the requested operation."""


class InvalidBounds(AtrasError):
    """Clip bounds violate lo <= hi."""


class LabelOutOfRange(AtrasError):
    """A class label falls outside the valid 0..num_classes-1 range."""


class FormatError(AtrasError):
    """A dataset file does not follow its declared binary format."""


class InsufficientData(AtrasError):
    """A split requests more examples than the source dataset holds."""


class InvalidArchitecture(AtrasError):
    """An architecture candidate violates its structural constraints."""


class InvalidConfig(AtrasError):
    """A configuration value is out of its legal range or unknown."""


class NonFiniteLoss(AtrasError):
    """Training produced a NaN/Inf loss; carries the phase it happened in."""

    def __init__(self, message: str, phase: str = ""):
        super().__init__(message)
        self.phase = phase


class EmptyInput(AtrasError):
    """An aggregate was asked for on an empty record set."""


class ConfigFileError(AtrasError):
    """A run-config document is malformed or holds unknown keys."""
