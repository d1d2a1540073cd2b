"""Exception types shared across the package."""


class MomaeError(Exception):
    """Base class for package-specific errors."""


class DegenerateInputError(MomaeError, ValueError):
    """Input is empty or carries no usable signal (e.g. zero-total histogram)."""


class InvalidArgumentError(MomaeError, ValueError):
    """Argument violates a documented precondition."""


class ShapeError(MomaeError, ValueError):
    """Operand shapes are incompatible; the message reports both shapes."""


class DegeneratePlanError(MomaeError, ValueError):
    """Mask plan lacks a required side of the partition (e.g. no visible patch)."""


class FormatError(MomaeError, ValueError):
    """Byte stream does not conform to the declared file format."""


class LengthError(FormatError):
    """File length disagrees with its header arithmetic."""


class DataError(MomaeError, ValueError):
    """Payload values violate a data contract (e.g. label out of range)."""


class CheckpointCorruptError(MomaeError, ValueError):
    """Checkpoint manifest and payload disagree."""


class CheckpointIncompatibleError(MomaeError, ValueError):
    """Checkpoint parameters do not fit the requested model configuration."""


class TrainingDivergedError(MomaeError, RuntimeError):
    """Loss became non-finite during training; names the epoch and step."""
