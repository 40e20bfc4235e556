"""Exception hierarchy shared across the package.

Plain precondition violations (bad argument values, shape mismatches) raise
ValueError; the classes here mark operational failures a caller may want to
handle distinctly.
"""


class PqflError(Exception):
    """Base class for package-specific errors."""


class EncodingError(PqflError):
    """Canonical wire encoding rejected the input (oversize or empty field)."""


class SchemeError(PqflError):
    """Unknown signature scheme, or a scheme backend failed or is unavailable."""

    def __init__(self, message: str, scheme_id: str | None = None):
        super().__init__(message)
        self.scheme_id = scheme_id


class AggregationError(PqflError):
    """Aggregation had no inputs (every update in the round was rejected)."""


class ParseError(PqflError):
    """A data file did not conform to its format; ``reason`` is one of
    'bad_magic', 'truncated', 'count_mismatch'."""

    def __init__(self, message: str, reason: str):
        super().__init__(message)
        self.reason = reason


class TrainingError(PqflError):
    """Local training diverged; ``step`` is the offending SGD step (1-based)."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class FitError(PqflError):
    """Convergence-rate fit is impossible (trace already at the optimum)."""


class ProbeError(PqflError):
    """A timing probe aborted mid-run; partial results were discarded."""
