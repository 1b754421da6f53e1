"""Exception types shared across the package.

Modeled outcomes (no fixed point, unstable queue, infeasible sizing) are
distinguished from usage errors so the CLI can map them to exit code 2.
"""


class GrantFreeError(Exception):
    """Base class for all package errors."""

    code = "Error"


class ModelError(GrantFreeError):
    """A modeled outcome: the analytic model has no valid answer here."""


class NoFixedPoint(ModelError):
    code = "NoFixedPoint"


class Unstable(ModelError):
    code = "Unstable"


class NoRealRoot(ModelError):
    code = "NoRealRoot"


class Infeasible(ModelError):
    code = "Infeasible"


class TableMiss(ModelError):
    code = "TableMiss"


class GridTooCoarse(GrantFreeError):
    code = "GridTooCoarse"


class QuadratureError(GrantFreeError):
    code = "QuadratureError"


class ConfigError(GrantFreeError):
    code = "ConfigError"


class EmptyStats(GrantFreeError):
    code = "EmptyStats"


class InsufficientSamples(GrantFreeError):
    code = "InsufficientSamples"


class TruncationWarning(UserWarning):
    """Probability mass beyond the retransmission truncation is not negligible."""
