"""Exception hierarchy."""


class AmbLoadError(Exception):
    """Base class for all package errors."""


class DomainError(AmbLoadError, ValueError):
    """An input violates a parameter or data invariant."""


class InfeasibleError(AmbLoadError):
    """The motor cannot carry its mechanical torque at the given voltage."""


class DivergenceError(AmbLoadError):
    """A simulated state left the numeric guard band."""


class RankDeficientError(AmbLoadError):
    """The ZIP regression basis is numerically rank deficient."""


class SamplingError(AmbLoadError):
    """Rejection sampling could not find a feasible point."""


class AllStartsFailedError(AmbLoadError):
    """Every optimizer start ended on the penalty value."""
