"""Exception and warning types raised across the package."""


class SpecklampError(Exception):
    """Base class for all package errors."""


class ValidationError(SpecklampError, ValueError):
    """A hard model invariant is violated."""


class ThresholdExceeded(ValidationError):
    """Gain at or above the random-laser threshold (x >= pi)."""


class NotDiffusive(ValidationError):
    """Mean free path not smaller than the slab thickness."""


class NotAmplifying(ValidationError):
    """Bose-Einstein factor is positive (absorbing rather than amplifying medium)."""


class ConfigError(ValidationError):
    """Malformed or unknown configuration keys."""


class DegenerateNoLight(SpecklampError, ValueError):
    """The mean photocount vanishes, so normalized quantities are undefined."""


class WindowOverlap(SpecklampError, ValueError):
    """Autocorrelation requested for overlapping counting windows (t <= tau)."""


class NumericalFailure(SpecklampError, ArithmeticError):
    """A numerical routine did not reach its accuracy target."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class SynthesisError(SpecklampError, ValueError):
    """A correlation function is not positive semidefinite on the sampling grid."""


class PrecisionNotReached(SpecklampError):
    """Too few Monte Carlo realizations for the requested precision."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class FitFailed(SpecklampError, RuntimeError):
    """Least-squares iteration did not converge."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class ValidityWarning(UserWarning):
    """Parameters lie outside the asymptotic regime where the theory holds."""


class IllConditioned(UserWarning):
    """Fit data constrain only a combination of the parameters."""
