"""Exception types raised across the package."""


class PVNowcastError(Exception):
    """Base class for all package errors."""


class FormatError(PVNowcastError, ValueError):
    """A file does not follow the expected layout."""


class CorruptionError(PVNowcastError, ValueError):
    """A file header is valid but its payload is truncated or oversized."""


class DimensionError(PVNowcastError, ValueError):
    """Array shapes or grid geometries are incompatible."""


class OutOfDomainError(PVNowcastError, ValueError):
    """A query point lies outside the grid's pixel-center hull."""


class InsufficientDataError(PVNowcastError, ValueError):
    """Not enough samples, fields or days to carry out an operation."""


class DataQualityError(PVNowcastError, ValueError):
    """Inputs contain too many missing values."""


class PolarConditionError(PVNowcastError, ValueError):
    """The sun does not cross the horizon on the requested day."""


class TooSmallError(DimensionError):
    """A field is too small for the requested number of cascade levels."""


class TrainingError(PVNowcastError, RuntimeError):
    """A regressor could not be trained."""

    def __init__(self, message, n_samples=None):
        super().__init__(message)
        self.n_samples = n_samples


class UndefinedIntervalError(PVNowcastError, ValueError):
    """Prediction intervals need at least two ensemble members."""


class MixedEnsembleError(PVNowcastError, ValueError):
    """Samples with different ensemble sizes were mixed."""
