"""Exception hierarchy shared by all modules."""


class BranchimmError(Exception):
    """Base class for every error raised by the package."""


class SpecError(BranchimmError, ValueError):
    """Invalid model or immigration parameters."""


class Degenerate(SpecError):
    """Every offspring law is almost surely constant."""


class NonPrimitive(SpecError):
    """The mean offspring matrix is not primitive."""


class ZeroQ(BranchimmError):
    """The critical quadratic constant vanished."""


class BadEnvelope(BranchimmError):
    """A thinning envelope was exceeded by the intensity."""


class EigenOutOfRange(BranchimmError):
    """A kernel eigenvalue lies outside [0, 1] (kernel not admissible)."""


class GridTooCoarse(BranchimmError):
    """The subordinator crossed the horizon in too few grid steps."""


class QuadratureFailure(BranchimmError):
    """A deterministic quadrature missed its tolerance."""


class TruncationTooLoose(BranchimmError):
    """The certified series tail bound exceeds the allowed level."""


class PopulationOverflow(BranchimmError):
    """A simulated population exceeded the configured cap."""


class EmptySample(BranchimmError, ValueError):
    """A Monte Carlo estimator received no samples."""


class ConditionViolated(BranchimmError):
    """An integrability precondition of a limit result does not hold."""


class NotCritical(BranchimmError):
    """The experiment needs a critical model."""


class NotSubcritical(BranchimmError):
    """The experiment needs a subcritical model."""


class ConfigError(BranchimmError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
