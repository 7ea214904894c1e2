"""Exception types shared across the package."""


class NmblochError(Exception):
    """Base class for all package errors."""


class ConfigurationError(NmblochError):
    """Invalid inputs, malformed configuration, or contract violations."""


class KernelError(NmblochError):
    """A correlation kernel cannot be realized (e.g. covariance not PSD)."""


class FitError(NmblochError):
    """Exponential-kernel fitting failed on the supplied samples."""


class ModelInadequacyError(FitError):
    """A kernel is too far from single-exponential for the hierarchy solver.

    Carries the measured relative residual so callers can report it.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IntegrationError(NmblochError):
    """Numerical integration produced non-finite values or excessive drift."""


class DiscretizationError(NmblochError):
    """A bath discretization failed its reconstruction-quality gate."""
