"""Exception types raised across the package."""


class PathkacError(Exception):
    """Base class for all package errors."""


class PathRangeError(PathkacError, ValueError):
    """A time or spatial argument lies outside the admissible range."""


class ShapeError(PathkacError, ValueError):
    """Dimensions or grid steps of the operands do not match."""


class LifetimeError(PathkacError):
    """A dead (killed) portion of a path was queried."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class KacOverflowError(PathkacError, ArithmeticError):
    """The Kac exponent left the representable range."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class PartitionError(PathkacError):
    """No admissible contraction partition exists on the given grid."""


class ConvergenceError(PathkacError):
    """Picard iteration did not reach the requested tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class ProjectionError(PathkacError, ArithmeticError):
    """Hermite projection produced non-finite coefficients."""


class SolverError(PathkacError, ArithmeticError):
    """The finite-difference solver produced non-finite values."""


class WindowError(PathkacError):
    """Too many Monte Carlo samples fell outside the reliable translation window."""
