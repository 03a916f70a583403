"""Exception hierarchy shared by all fracslow modules."""


class FracSlowError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FracSlowError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SingularityError(DomainError):
    """A pointwise evaluation was requested at a kernel singularity."""


class StabilityError(DomainError):
    """A drift coefficient or matrix violates the required stability condition."""


class EmbeddingError(FracSlowError):
    """The circulant embedding of a covariance has significantly negative eigenvalues."""


class AccuracyError(FracSlowError):
    """A quadrature could not reach the requested tolerance.

    Attributes
    ----------
    estimate : float
        Best value obtained.
    error : float
        Estimated absolute error of ``estimate``.
    """

    def __init__(self, message, estimate=float("nan"), error=float("nan")):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class NumericalError(FracSlowError):
    """A matrix factorization failed after the jitter policy was exhausted."""


class StiffnessError(FracSlowError):
    """The variance ODE integrator could not make progress."""


class ConfigurationError(FracSlowError, ValueError):
    """Inputs are inconsistent or a required value is missing."""


class BlowUpError(FracSlowError):
    """A simulated trajectory became non-finite."""

    def __init__(self, message, index=None, seed=None):
        super().__init__(message)
        self.index = index
        self.seed = seed


class HTooLargeError(DomainError):
    """The deviation level is outside the validity range of the nonlinear bound."""
