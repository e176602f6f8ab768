"""Exception hierarchy shared by all analysis modules."""


class InfoflowError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(InfoflowError, ValueError):
    """Matrix or selector shapes are inconsistent."""


class DegenerateCovarianceError(InfoflowError):
    """A covariance that must be positive definite is (numerically) singular."""


class ConvergenceError(InfoflowError):
    """An iterative computation did not converge."""


class UnstableSystemError(InfoflowError):
    """The dynamics are unstable where stability is required."""


class UndefinedTransferError(InfoflowError):
    """A transfer formula has a singular denominator and no regularization."""
