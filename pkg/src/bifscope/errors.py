"""Exception hierarchy shared by the analysis modules."""


class BifscopeError(Exception):
    """Base class for all analysis errors."""


class DimensionError(BifscopeError, ValueError):
    pass


class OnBoundaryError(BifscopeError):
    """The reference point lies on the sampled curve (critical condition)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ResolutionError(BifscopeError):
    """A curve is too coarse to count encirclements and no refiner was given."""


class RealizationError(BifscopeError, ValueError):
    pass


class DegenerateOrbitError(BifscopeError):
    """The periodicity map I - e^{A2(T-d)} e^{A1 d} is singular."""


class GrazingError(BifscopeError):
    """The orbit is tangent to the ramp at the switching instant."""


class LoopGainPoleError(BifscopeError):
    """Loop gain evaluated at an eigenvalue of the open-loop transition."""


class IndentationRequiredError(BifscopeError):
    """An open-loop eigenvalue sits on the unit circle; raise the integrator pole."""


class InsufficientDataError(BifscopeError, ValueError):
    pass


class ModelFormatError(BifscopeError, ValueError):
    pass
