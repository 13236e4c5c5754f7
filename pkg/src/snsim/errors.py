"""Exception hierarchy shared across the package."""


class SnsimError(Exception):
    """Base class for all errors raised by snsim."""


class DomainError(SnsimError, ValueError):
    """A numeric argument lies outside the domain of the operation."""


class ThresholdExceededError(DomainError):
    """The OPO pump is at or above its oscillation threshold."""


class PreconditionError(SnsimError, ValueError):
    """Inputs violate a documented precondition (sizes, sampling, grids)."""


class DataError(SnsimError, ValueError):
    """Input data contain non-finite or otherwise unusable values."""


class InitializationError(SnsimError):
    """Automatic peak initialization could not find the requested peaks."""


class ConfigError(SnsimError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
