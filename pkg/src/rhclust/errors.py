"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    pass


class InvalidState(RuntimeError):
    pass


class DegenerateDataError(ValueError):
    """The data make a statistic or direction undefined (e.g. zero WCSS)."""


class NumericalFailure(RuntimeError):
    """Quadrature could not produce a usable value.

    ``diagnostics`` carries whatever was computed before giving up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SchemaError(ValueError):
    """CSV input is missing a required column."""
