"""Exception hierarchy shared across the package."""


class CDMetaError(Exception):
    """Base class for all errors raised by cdmeta."""


class DataFormatError(CDMetaError, ValueError):
    """Malformed input file: wrong columns or unparseable cells."""


class ValidationError(CDMetaError, ValueError):
    """Input parses but violates a data-model invariant."""


class DomainError(CDMetaError, ValueError):
    """Argument outside the domain of a probability kernel or estimator."""


class BoundaryFitError(CDMetaError):
    """The estimate sits on the boundary of the parameter space.

    Raised by procedures that need an interior estimate (normal
    approximation, deviance curves).
    """

    def __init__(self, message, boundary=None):
        super().__init__(message)
        self.boundary = boundary


class UninformativeError(CDMetaError):
    """The data carry no information about the parameter (flat CD)."""


class GridError(CDMetaError):
    """The evaluation grid does not bracket a requested quantile."""


class NumericalError(CDMetaError, RuntimeError):
    """An optimiser or root finder failed to converge or bracket."""
