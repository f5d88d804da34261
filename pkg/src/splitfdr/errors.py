"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class SplitFdrError(Exception):
    """Base class for all package errors."""


class ConfigError(SplitFdrError):
    """Invalid configuration: bad keys, out-of-range values, missing fields."""


class DataError(SplitFdrError):
    """Problem with input data: parse failures, non-finite values, degeneracy."""


class NumericError(SplitFdrError):
    """Numerical failure inside an algorithm (divergence, non-PD matrix)."""
