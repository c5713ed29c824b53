"""Exception hierarchy for pascali_disc."""


class PascaliError(Exception):
    """Base class for all library errors."""


class ConfigurationError(PascaliError, ValueError):
    """Invalid grid, config file or parameter combination."""


class GridMismatch(PascaliError, ValueError):
    """Two fields live on different grids."""


class DimensionMismatch(PascaliError, ValueError):
    pass


class NumericalFailure(PascaliError, RuntimeError):
    """Base for failures of a numerical procedure (CLI exit code 3)."""


class NoConvergence(NumericalFailure):
    def __init__(self, message, kappa=None, iterations=None):
        super().__init__(message)
        self.kappa = kappa
        self.iterations = iterations


class SingularOperator(NumericalFailure):
    pass


class NonConvexDetected(NumericalFailure):
    def __init__(self, message, point=None, curvature=None):
        super().__init__(message)
        self.point = point
        self.curvature = curvature


class NotInDomain(NumericalFailure):
    pass


class SectionVanishes(NumericalFailure):
    pass


class CollarViolation(NumericalFailure):
    pass


class ContainmentUnachievable(NumericalFailure):
    pass


class NonPositiveMargin(NumericalFailure):
    pass


class ShrinkExhausted(NumericalFailure):
    pass


class NoAdmissibleN(NumericalFailure):
    def __init__(self, message, failing=None, iteration=None):
        super().__init__(message)
        self.failing = failing
        self.iteration = iteration


class StageOneStall(NumericalFailure):
    pass


class HolomorphyFailure(NumericalFailure):
    pass


class ZeroBoundary(NumericalFailure):
    pass


class InvariantViolation(PascaliError, RuntimeError):
    """A (b1)-(b8) style invariant failed (CLI exit code 4)."""

    def __init__(self, message, item=None, iteration=None):
        super().__init__(message)
        self.item = item
        self.iteration = iteration


class AliasingWarning(UserWarning):
    """Boundary data carries energy in the Nyquist mode."""
