"""Exception hierarchy shared by all estimator modules."""


class SirkitError(Exception):
    """Base class for every error raised by sirkit."""


class DimensionMismatch(SirkitError, ValueError):
    pass


class NotPositiveDefinite(SirkitError, ArithmeticError):
    """A pivot of a Cholesky factorization was not strictly positive."""


class CovarianceNotPD(NotPositiveDefinite):
    """An intermediate state covariance could not be factorized."""


class InnovationCovSingular(SirkitError, ArithmeticError):
    pass


class DowndateFailure(NotPositiveDefinite):
    """A rank-one downdate would leave the factor indefinite."""


class IntegrandFailure(SirkitError, RuntimeError):
    """The integrand raised or produced a non-finite value at ``point``."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class EmptyInput(SirkitError, ValueError):
    pass


class MissingCrossCov(SirkitError, ValueError):
    pass


class MissingForwardData(SirkitError, ValueError):
    pass


class JacobianUnavailable(SirkitError, ValueError):
    pass


class InvalidScaling(SirkitError, ValueError):
    pass


class ConfigError(SirkitError, ValueError):
    pass
