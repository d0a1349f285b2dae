"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration, shape mismatch, or unknown name."""


class NumericalError(ArithmeticError):
    """A non-finite value or a failed numerical procedure."""

