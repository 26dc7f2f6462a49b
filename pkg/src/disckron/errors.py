"""Exception hierarchy shared by all modules."""


class DisckronError(Exception):
    """Base class for all package errors."""


class ValidationError(DisckronError, ValueError):
    """Malformed input or violated precondition."""


class InsufficientPrecision(ValidationError):
    """An output digit would depend on digits that are not stored."""


class PrecisionExceeded(ValidationError):
    """A query reaches past the stored precision of a series."""


class InsufficientResolution(ValidationError):
    """A q-adic coordinate is too coarse for the requested grid."""


class DimensionMismatch(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class BudgetExceeded(DisckronError):
    """The requested computation exceeds the configured work budget."""


class CoverInvalid(DisckronError):
    def __init__(self, message, counterexample=None):
        super().__init__(message)
        self.counterexample = counterexample


class ChainInvalid(DisckronError):
    pass


class BoundTrivial(DisckronError):
    """N < d log_q d: the discrepancy bound holds without any work."""


class DegenerateCell(DisckronError):
    """The shell K_h has measure 0 or 1, so its indicator is constant."""
