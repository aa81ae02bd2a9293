"""Exception types shared across the package."""


class CloudsweepError(Exception):
    """Base class for all package errors."""


class DomainError(CloudsweepError, ValueError):
    """An argument is outside the documented domain of an operation."""


class CloudParseError(CloudsweepError):
    """A cloud file failed to parse; carries the offending line number."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{where}{message}")


class FrameError(CloudsweepError):
    """A local tangent frame could not be built (degenerate neighborhood)."""


class OperatorError(CloudsweepError):
    """Laplacian assembly failed; carries the offending point indices."""

    def __init__(self, message, indices=()):
        self.indices = tuple(indices)
        super().__init__(f"{message} (points: {list(self.indices)})")


class SolverError(CloudsweepError):
    """An eigen or linear solver did not converge."""


class FitError(CloudsweepError):
    """Geometric primitive fitting failed."""


class ProjectionError(CloudsweepError):
    """Projection onto a degenerate primitive."""


class SplitError(CloudsweepError):
    """A point pair has no real factorization."""


class PointAtInfinityError(CloudsweepError):
    """A conformal point with vanishing origin component cannot be extracted."""


class MotorLogError(CloudsweepError):
    """Motor logarithm is not defined (half-turn rotor or non-motor input)."""


class DegenerateLinesError(CloudsweepError):
    """Motor between (anti-)parallel opposite lines is not unique."""


class LostAgentError(CloudsweepError):
    """Too few surface points near the agent to project it."""


class GradientError(CloudsweepError):
    """Tangent-plane gradient estimation failed (rank-deficient design)."""


class ConfigError(CloudsweepError):
    """Scenario configuration is invalid."""
