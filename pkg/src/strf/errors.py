"""Exception types shared across the package.

The CLI maps these onto process exit codes: usage errors exit 1, data
errors exit 2, numeric failures exit 3.
"""


class UsageError(Exception):
    """Bad command line or malformed configuration."""


class DataError(Exception):
    """Missing or unreadable dataset artifacts (always carries the path)."""


class NumericError(Exception):
    """Non-finite loss or other unrecoverable numeric failure."""
