"""Exception types shared across the package."""


class KinkLabError(Exception):
    """Base class for all kinklab errors."""


class InvalidArgumentError(KinkLabError, ValueError):
    """An argument violates a documented precondition."""


class DomainViolationError(KinkLabError):
    """Interface positions left the admissible set.

    Carries the violation report (first violated gap) when available.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConstraintInfeasibleError(KinkLabError):
    """No admissible root satisfies the mass constraint."""


class FermiFailureError(KinkLabError):
    """Newton iteration for the orthogonality system did not converge.

    Callers running trajectories treat this as a tube exit.
    """


class TubeExitError(KinkLabError):
    """State left the stability tube; the Gram matrix is no longer safely invertible."""


class NumericalFailureError(KinkLabError):
    """A linear solve or time step produced non-finite values."""


class ConfigError(KinkLabError):
    """Experiment configuration is malformed or violates an invariant."""
