"""Exception types raised by the estimation machinery."""


class MixcoxError(Exception):
    """Base class for estimation failures."""


class DegenerateDataError(MixcoxError):
    """A risk set containing an event has zero total weight."""


class SeparationError(MixcoxError):
    """Monotone partial likelihood: a coefficient diverges (infinite MLE)."""


class ConditioningError(MixcoxError):
    """A finite-difference information matrix is not positive definite."""


class DatasetError(ValueError):
    """Invalid subject-level data (parsing or domain violations)."""
