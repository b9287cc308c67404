"""Exception hierarchy shared across the package.

Shape/contract violations map to CLI exit code 1, data/IO failures to 2.
"""


class LfsambaError(Exception):
    """Base class for all package errors."""


class ShapeError(LfsambaError):
    """Tensor dimensions incompatible with an operation's contract."""


class ContractError(LfsambaError):
    """A precondition or usage contract was violated."""


class ConfigError(ContractError):
    """Run configuration is malformed or inconsistent."""


class DataError(LfsambaError):
    """Dataset files missing, malformed, or unreadable."""


class DecodeError(DataError):
    """An image file could not be decoded."""


class CheckpointError(DataError):
    """Checkpoint file unreadable, corrupt, or incompatible."""
