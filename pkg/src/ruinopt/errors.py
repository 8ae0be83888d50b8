"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced a non-finite result."""


class ConfigError(ValueError):
    """A run configuration is malformed or violates a model constraint."""
