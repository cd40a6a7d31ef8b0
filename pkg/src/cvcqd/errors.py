"""Exception hierarchy shared across the simulator."""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class InvalidArgumentError(SimulationError, ValueError):
    """An operation received an argument outside its documented domain."""


class InvalidStateError(SimulationError, RuntimeError):
    """An operation was applied to a state that cannot support it
    (e.g. measuring a consumed mode, sampling a non-PSD covariance)."""


class ProtocolOrderError(SimulationError, RuntimeError):
    """A protocol step was invoked out of its mandated order."""


class MetricDomainError(SimulationError, ValueError):
    """A metric was evaluated outside its mathematical domain."""


class ConfigError(SimulationError, ValueError):
    """A scenario configuration failed validation.

    ``field`` names the offending entry so the CLI can print a precise
    diagnostic.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
