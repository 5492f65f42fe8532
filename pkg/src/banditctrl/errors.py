"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid configuration, dimensions, or numeric inputs."""


class StateError(RuntimeError):
    """A stateful object was used out of protocol order."""


class SolverError(RuntimeError):
    """An iterative solver failed to converge or the problem is degenerate."""


class ControllabilityError(SolverError):
    """The probe data does not excite the system enough to invert the moments."""
