"""Exception types shared across the package."""


class DomainError(ValueError):
    """Raised when an argument is outside the physically meaningful domain."""


class NumericalFailure(RuntimeError):
    """Raised when a propagator loses unitarity, trace or positivity."""


class FitNonConvergence(RuntimeError):
    """Raised when the beat fit cannot identify its parameters."""


class ConfigError(ValueError):
    """Raised for malformed configuration files or command lines."""
