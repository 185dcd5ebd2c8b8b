"""Exception hierarchy shared by every gridjoin module."""

from typing import Optional


class GridJoinError(Exception):
    """Base class for all errors raised by gridjoin."""


class ConfigError(GridJoinError, ValueError):
    """Invalid parameter or flag combination (e.g. k > n)."""


class DatasetFormatError(GridJoinError, ValueError):
    """A dataset file could not be parsed."""

    def __init__(self, message: str, row: Optional[int] = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class SampleTooSmallError(GridJoinError, ValueError):
    """A sample fraction selects fewer points than the statistic needs."""


class IdOverflowError(GridJoinError, OverflowError):
    """The linearized cell id space does not fit in a 64-bit integer."""


class BufferOverflowError(GridJoinError):
    """A kernel batch produced more pairs than its result buffer holds."""

    def __init__(self, required: int, capacity: int):
        super().__init__(f"batch needs {required} result slots, buffer holds {capacity}")
        self.required = required
        self.capacity = capacity


class OracleSizeError(GridJoinError, ValueError):
    """The brute-force oracle was asked to join a dataset above its size guard."""


class PartitionConfigError(GridJoinError, ValueError):
    """Node or query-batch counts that violate the partitioning contract."""
