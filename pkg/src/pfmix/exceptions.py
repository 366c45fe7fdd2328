"""Exception types, mapped to CLI exit codes by pfmix.cli."""


class PfmixError(Exception):
    """Base class for all pfmix errors."""


class UsageError(PfmixError):
    """Bad arguments or an invalid call sequence (CLI exit code 2)."""


class DomainError(UsageError):
    """Argument outside the mathematical domain of an operation."""


class UndefinedMetricError(UsageError):
    """Metric is undefined for the given inputs (e.g. single-class labels)."""


class DataError(PfmixError):
    """Malformed or inconsistent data (CLI exit code 3)."""


class NumericError(PfmixError):
    """Numerical failure such as non-finite parameters (CLI exit code 4)."""
