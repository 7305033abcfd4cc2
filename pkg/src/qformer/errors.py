"""Exception types shared across the package."""


class QFormerError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(QFormerError):
    """Non-finite entries, shape mismatches, or malformed arguments."""


class FactorTooSmallError(QFormerError):
    """Requested encoding factor is below the spectral norm of the matrix."""


class InvalidModelError(QFormerError):
    """A factor model's assumptions do not hold for the given matrix."""


class DegenerateError(QFormerError):
    """Zero column, vanishing variance, or vanishing normalization."""


class ResourceLimitError(QFormerError):
    """Explicit construction would exceed the configured dimension ceiling."""


class ContractViolationError(QFormerError):
    """An operation's precondition or tracked invariant does not hold."""


class UnreachablePrecisionError(QFormerError):
    """Requested approximation target is below what double precision supports."""
