"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`GloryError`
so callers (and the command line front end) can tell modelling failures
apart from programming errors.
"""


class GloryError(Exception):
    """Base class for all package errors."""


class NonPositiveGamma(GloryError, ValueError):
    pass


class InvalidLevel(GloryError, ValueError):
    pass


class GridTooSmall(GloryError, ValueError):
    pass


class DomainMismatch(GloryError, ValueError):
    pass


class ZeroField(GloryError, ValueError):
    pass


class NotIntegrable(GloryError, ValueError):
    pass


class EvaluationError(GloryError, ValueError):
    pass


class InsufficientSamples(GloryError, ValueError):
    pass


class UnsupportedExpression(GloryError, ValueError):
    pass


class ExpressionSyntaxError(GloryError, ValueError):
    pass


class TestFunctionNotAdmissible(GloryError, ValueError):
    __test__ = False  # keep pytest from collecting this as a test class


class GloryOverflow(GloryError, OverflowError):
    """Raised when an ``exp(gamma * t)`` factor leaves the float64 range."""


class StepFailure(GloryError, RuntimeError):
    pass


class ConfigError(GloryError, ValueError):
    pass


class FormatVersionMismatch(GloryError, ValueError):
    pass


class CorruptFrame(GloryError, ValueError):
    pass
