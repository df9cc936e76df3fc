"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An argument is outside the accepted domain."""


class MalformedImageError(ValueError):
    """An image array does not have H x W x 3 layout."""


class DatasetError(Exception):
    """A dataset could not be loaded or is inconsistent."""


class EmptyDatasetError(DatasetError):
    pass


class NumericalError(RuntimeError):
    """Non-finite values appeared during optimization."""
