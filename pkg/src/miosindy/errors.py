"""Exception and warning types raised across the package."""


class MiosindyError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(MiosindyError):
    """Array shapes are inconsistent with each other or with the system."""


class ShapeMismatch(DimensionMismatch):
    """Two coefficient arrays that must be congruent are not."""


class InvalidProblem(MiosindyError):
    """A problem object violates its own preconditions."""


class SingularSystem(MiosindyError):
    """Unregularized normal equations are numerically singular."""


class SingularSupport(MiosindyError):
    """Least-squares refit columns are rank deficient."""


class InfeasibleConstraints(MiosindyError):
    """Side constraints are provably unsatisfiable for the allowed supports."""


class Diverged(MiosindyError):
    """A simulated state left the trusted region or became non-finite."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class UnknownSystem(MiosindyError):
    """Requested dynamical system is not registered."""


class ConfigError(MiosindyError):
    """An experiment configuration file is missing, malformed, or invalid."""


class TooFewSamples(MiosindyError):
    """Not enough samples for the requested stencil or bootstrap."""


class OrderUnsupported(MiosindyError):
    """Requested derivative order is outside the supported range."""


class DomainTooSmall(MiosindyError):
    """Data extent cannot hold a quadrature subdomain of the requested size."""


class ZeroColumn(MiosindyError):
    """Column normalization hit a numerically zero column."""


class DegenerateSampleSize(MiosindyError):
    """Information criterion undefined: sample size too small for support size."""


class ZeroRssWarning(UserWarning):
    """Residual sum of squares was zero or negative and got floored."""
