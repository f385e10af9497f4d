"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when a configuration value or scenario file is invalid."""


class NumericalError(RuntimeError):
    """Raised when an iterative solver or quadrature fails to converge."""
