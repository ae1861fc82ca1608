"""Exception types shared across the package."""


class ScdError(Exception):
    """Base class for all scdetect errors."""


class ConfigError(ScdError, ValueError):
    """A configuration object or argument is invalid."""


class DataDomainError(ScdError, ValueError):
    """An observation lies outside the supported domain [0, 1]."""


class DetectorStateError(ScdError, RuntimeError):
    """An operation was applied to a detector in the wrong state."""


class PreconditionError(ScdError, RuntimeError):
    """A validation oracle was fed input it is not proven for."""
