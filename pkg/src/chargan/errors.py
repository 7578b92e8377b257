"""Exception types shared across the package."""


class CharganError(Exception):
    pass


class ShapeError(CharganError):
    """Tensor/layer dimension mismatch."""


class UsageError(CharganError):
    """An operation was called in a way its contract forbids."""


class SpecError(CharganError):
    """A layer spec list is malformed or internally inconsistent."""


class NumericsError(CharganError):
    """NaN/Inf detected by the debug checks."""


class TransferError(CharganError):
    """Weight transfer failed on a shared parameter name."""


class ConfigError(CharganError):
    """A run configuration is invalid."""


class IdxFormatError(CharganError):
    """Base for IDX container parse failures."""


class IdxMagicError(IdxFormatError):
    pass


class IdxTruncatedError(IdxFormatError):
    pass


class IdxCountError(IdxFormatError):
    """Image/label counts disagree between paired files."""


class CheckpointError(CharganError):
    """Base for checkpoint file failures."""


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointNameError(CheckpointError):
    """A tensor name in the file does not match the target networks."""
