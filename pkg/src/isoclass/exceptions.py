"""Exception types raised across the package."""


class IsoclassError(Exception):
    """Base class for errors raised by isoclass."""


class UnresolvedPrecision(IsoclassError, ArithmeticError):
    """Working precision too small to certify the requested structure."""


class InternalInconsistency(IsoclassError, ArithmeticError):
    """An invariant that holds mathematically failed; indicates a bug."""


class SingularMatrix(IsoclassError, ArithmeticError):
    """Matrix is singular at the working precision."""


class InvalidStratum(IsoclassError, ValueError):
    pass


class InvalidParity(IsoclassError, ValueError):
    pass


class TooLarge(IsoclassError, ValueError):
    """Enumeration would exceed its guard."""


class NotInS(IsoclassError, ValueError):
    """Vector is not in the intersection of the two summands."""


class ConfigError(IsoclassError, ValueError):
    pass


class TheoryUnavailable(IsoclassError):
    """No theoretical law is implemented for the requested comparison."""


class DegenerateBuckets(IsoclassError, ValueError):
    """Chi-square bucketing left fewer than two buckets."""
