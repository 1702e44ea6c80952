"""Exception hierarchy shared by all modules.

``DomainError`` covers bad inputs and violated preconditions. ``NumericalError``
covers failures that only show up while computing (blow-up, rank loss,
singular Jacobians). The CLI maps the first family to exit code 1 and the
second to exit code 2.
"""


class KoopRepError(Exception):
    """Base class for every error raised by this package."""


class DomainError(KoopRepError, ValueError):
    """An argument lies outside the domain of the operation."""


class DimensionError(DomainError):
    """Array shapes or state dimensions do not match."""


class UnsupportedError(DomainError):
    """The requested operation is not defined for this object."""


class LookupFailure(DomainError, KeyError):
    """Unknown catalog or registry name."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NumericalError(KoopRepError, ArithmeticError):
    """A computation failed for numerical reasons."""


class DivergenceError(NumericalError):
    """A trajectory left the finite range.

    Attributes
    ----------
    time : float
        Time at which the blow-up was detected.
    partial : object or None
        Partial trajectory computed before the blow-up, if any.
    """

    def __init__(self, message, time, partial=None):
        super().__init__(message)
        self.time = time
        self.partial = partial


class ConditioningError(NumericalError):
    """A data or design matrix is numerically rank deficient."""

    def __init__(self, message, rank=None, size=None):
        super().__init__(message)
        self.rank = rank
        self.size = size


class SingularityError(NumericalError):
    """A Jacobian determinant vanished where it must not."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class SupportWarning(UserWarning):
    """A density is not supported well inside its grid box."""
