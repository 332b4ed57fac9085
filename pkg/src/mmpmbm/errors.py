"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model, scenario or run configuration."""


class NumericalError(ArithmeticError):
    """A linear-algebra step failed; ``component`` holds the offending input."""

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class RejectedMeasurementError(ValueError):
    """Measurement lies outside the surveillance region."""
