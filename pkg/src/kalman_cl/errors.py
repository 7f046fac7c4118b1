"""Exception types raised across the package."""


class KalmanCLError(Exception):
    """Base class for all package errors."""


class ShapeError(KalmanCLError, ValueError):
    """Array shapes or lengths do not fit together."""


class ContractError(KalmanCLError, ValueError):
    """A documented precondition was violated."""


class FormatError(KalmanCLError, ValueError):
    """A file is malformed, truncated or corrupted."""


class ConsistencyError(FormatError):
    """Two related files disagree (e.g. image and label counts)."""


class VersionError(FormatError):
    """A checkpoint was written by an incompatible format version."""
