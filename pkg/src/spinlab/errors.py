"""Exception types shared across the package."""


class SpinlabError(Exception):
    """Base class for all package errors."""


class CapacityError(SpinlabError):
    """An enumeration guard was exceeded.

    The ``guard`` attribute names the violated limit.
    """

    def __init__(self, guard, message=None):
        self.guard = guard
        super().__init__(message or f"capacity guard violated: {guard}")


class DegenerateMeasureError(SpinlabError):
    """Every configuration has zero weight."""


class UnsupportedModelError(SpinlabError):
    """The requested operation is not defined for this model."""


class NumericalError(SpinlabError):
    """An eigensolver or consistency check failed numerically."""


class NotReversibleError(NumericalError):
    """A chain that must be reversible is not.

    Non-reversible chains are analysed through ``reversiblization``.
    """


class ConfigError(SpinlabError):
    """An experiment configuration failed schema validation."""
