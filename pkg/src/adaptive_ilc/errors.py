"""Exception types shared across the library."""


class AdaptiveIlcError(Exception):
    """Base class for library errors."""


class NonFiniteOutput(AdaptiveIlcError):
    """A simulated output became non-finite (divergence diagnostic).

    Carries the iteration and time step at which the recursion blew up,
    when known; -1 means "not attached".
    """

    def __init__(self, message, iteration=-1, time_step=-1):
        super().__init__(message)
        self.iteration = iteration
        self.time_step = time_step


class DimensionMismatch(AdaptiveIlcError):
    """Trajectory or table lengths disagree."""


class InvalidParams(AdaptiveIlcError):
    """A parameter violates its contract (named in the message)."""


class ConfigError(AdaptiveIlcError):
    """A config file or CLI option is malformed (failing key named)."""
