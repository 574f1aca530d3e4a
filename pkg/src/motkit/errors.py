"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
InternalError -> 3.
"""


class MotkitError(Exception):
    """Base class for all package errors."""


class UsageError(MotkitError):
    """Bad command-line usage or inconsistent options."""


class DataError(MotkitError):
    """Malformed, inconsistent, or out-of-contract input data."""


class InternalError(MotkitError):
    """An internal invariant was violated; indicates a bug."""
