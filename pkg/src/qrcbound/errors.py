"""Exception hierarchy shared by all modules."""


class QRCError(Exception):
    """Base class for every error raised by the package."""


class InvalidModelError(QRCError, ValueError):
    """A model description violates a structural requirement."""


class ConditioningError(QRCError, ValueError):
    """Conditioning on an event of probability zero."""


class NumericError(QRCError, RuntimeError):
    """A numerical routine failed to converge or bracket."""


class CouplerConstructionError(QRCError, RuntimeError):
    """The leftover laws of a coupler do not normalize."""


class DegenerateCouplingError(QRCError, RuntimeError):
    """The coupling probability lower bound is not positive."""


class InfeasibleOptimizationError(QRCError, RuntimeError):
    """No threshold in the search interval yields a finite constant."""


class ModelViolationError(QRCError, RuntimeError):
    """The majorant was exceeded during simulation."""


class RunawayIntensityError(QRCError, RuntimeError):
    """The event-count guard was exceeded."""


class ConfigError(QRCError, ValueError):
    """Malformed run configuration."""
