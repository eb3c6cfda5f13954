"""Exception types raised across the package."""


class MagSepError(ValueError):
    """Base class for contract violations on user-supplied inputs."""


class ShapeError(MagSepError):
    """Operand shapes are incompatible."""


class ConfigError(MagSepError):
    """A configuration value is invalid."""


class InputTooShortError(MagSepError):
    """Signal is shorter than one analysis frame."""


class DegenerateInputError(MagSepError):
    """Input has zero energy or otherwise admits no meaningful result."""


class ContractError(MagSepError):
    """A documented precondition of an operation was violated."""


class CheckpointError(MagSepError):
    """Checkpoint file is malformed or does not match the model."""
