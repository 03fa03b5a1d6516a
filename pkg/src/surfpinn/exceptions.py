"""Custom exceptions for the surfpinn package."""


class SurfPinnError(Exception):
    """Base exception for all surfpinn-related errors."""
    pass


class GeometryError(SurfPinnError):
    """Raised when a surface cannot provide the requested quantity."""
    pass


class DegenerateGradient(GeometryError):
    """Raised when |grad S| is too small to define a normal."""
    pass


class DegenerateChart(GeometryError):
    """Raised when the first partials of a chart are (nearly) parallel."""
    pass


class UnknownSurface(GeometryError):
    """Raised when a surface name is not registered."""
    pass


class SamplingError(SurfPinnError):
    """Raised when point generation fails."""
    pass


class ProjectionFailed(SamplingError):
    """Raised when Newton projection onto a level set does not converge."""
    pass


class SubsetTooLarge(SamplingError):
    """Raised when more points are requested than the parent set holds."""
    pass


class PointSetFormatError(SamplingError):
    """Raised when a point-set file cannot be parsed."""
    pass


class NetworkError(SurfPinnError):
    """Raised for invalid network layouts or parameter snapshots."""
    pass


class InvalidArchitecture(NetworkError):
    """Raised when layer sizes do not describe a 3 -> ... -> 1 network."""
    pass


class SnapshotError(NetworkError):
    """Raised when a parameter snapshot cannot be read or written."""
    pass


class ProblemError(SurfPinnError):
    """Raised when a PDE problem is ill-posed or unknown."""
    pass


class EmptyTrainingSet(ProblemError):
    """Raised when the collocation loss is requested on zero points."""
    pass


class UnknownProblem(ProblemError):
    """Raised when a manufactured problem name is not known."""
    pass


class OptimizationError(SurfPinnError):
    """Raised when the optimizer cannot make progress."""
    pass


class LineSearchFailed(OptimizationError):
    """Raised when no step satisfying the strong Wolfe conditions is found."""
    pass


class ExperimentError(SurfPinnError):
    """Raised when an experiment cannot be configured or evaluated."""
    pass


class ZeroReference(ExperimentError):
    """Raised when the reference solution vanishes on every test point."""
    pass


class ConfigError(ExperimentError):
    """Raised when an experiment configuration fails validation."""
    pass


class AcceptanceFailure(ExperimentError):
    """Raised when a result misses its acceptance threshold in strict mode."""
    pass
