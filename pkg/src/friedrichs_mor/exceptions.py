"""Exception types shared across the package."""


class NonConformingResolution(ValueError):
    """Mesh width does not tile a rectangle (or margin) into whole cells."""


class NonPositiveMargin(ValueError):
    pass


class SpaceMismatch(ValueError):
    pass


class NegativeDefinite(ValueError):
    """Friedrichs positivity condition violated on at least one cell."""


class NotPositiveDefinite(ArithmeticError):
    pass


class CapExceeded(ValueError):
    """Dense transfer matrix requested for too many boundary DOFs."""


class InsufficientData(ValueError):
    pass


class ZeroSample(ValueError):
    pass


class EmptyBasis(ValueError):
    pass


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to CLI exit code 2)."""


class MaxBasisReached(UserWarning):
    """Training stopped at the basis cap before the estimator met the tolerance."""
