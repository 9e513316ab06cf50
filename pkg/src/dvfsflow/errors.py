"""Exception taxonomy shared across the workbench."""


class ConfigurationError(ValueError):
    """A config field violates its documented constraint."""


class DomainError(ValueError):
    """An argument is outside the operation's domain (bad action index, shape mismatch, ...)."""


class StateError(RuntimeError):
    """Operation called on an object in the wrong state (finished episode, untrained model)."""


class InsufficientDataError(ValueError):
    """Not enough samples to run the requested fit or draw."""


class NumericError(ArithmeticError):
    """NaN/inf detected where finite values are required."""
