"""Exception hierarchy.

Precondition failures map to CLI exit code 2; everything here derives from
:class:`PreconditionError` except configuration errors.
"""


class PreconditionError(ValueError):
    """An operation was called outside its domain."""


class InfMean(PreconditionError):
    """A required mean is infinite."""


class MeanNotFinite(PreconditionError):
    """Closed forms that need a regular-variation index above one."""


class ViolatesKesten(PreconditionError):
    """The Kesten constant ``c`` does not exceed the projected mean."""


class NotLongTailed(PreconditionError):
    """The law is not tagged long-tailed."""


class TauOverflow(PreconditionError):
    """A stopping variable needs more than the allowed number of terms."""


class ArrivalOverflow(PreconditionError):
    """A counting-process path produced too many arrivals."""


class ConfigError(ValueError):
    """Schema violation in an experiment configuration."""
