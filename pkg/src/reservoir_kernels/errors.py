"""Exception types shared across the package.

The CLI maps :class:`DataError` to exit code 1, :class:`ConfigurationError`
to 2 and :class:`NumericalError` to 3.
"""


class DataError(ValueError):
    """Bad or unusable input data."""


class IngestionError(DataError):
    pass


class DimensionError(DataError):
    """Channel counts or window widths that do not line up."""


class InputBoundError(DataError):
    """An input row whose norm exceeds the kernel's bound ``M``."""


class ConfigurationError(ValueError):
    """Invalid parameters, grids or settings."""


class ParameterError(ConfigurationError):
    pass


class NumericalError(ArithmeticError):
    """A solve or factorization that could not be completed reliably."""


class ContractError(DataError):
    """Arguments that break a documented precondition (shape, symmetry, missing data)."""
