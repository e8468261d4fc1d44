"""Exception types shared across the package."""


class EulerLimitError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(EulerLimitError, ValueError):
    """Invalid configuration or mismatched inputs (CLI exit code 1)."""


class NumericalError(EulerLimitError, RuntimeError):
    """A simulation became numerically invalid (CLI exit code 2)."""


class SingularPointError(NumericalError, ValueError):
    """A kernel was evaluated at the origin of the torus."""


class SingularConfigurationError(NumericalError, ValueError):
    """Two particles coincide (or come closer than the hard floor)."""

    def __init__(self, message, pair=None, distance=None):
        super().__init__(message)
        self.pair = pair
        self.distance = distance


class CollisionError(SingularConfigurationError):
    """Pair distance dropped below the collision floor during integration."""


class FitError(EulerLimitError, ValueError):
    """Too few distinct data points for a regression."""
