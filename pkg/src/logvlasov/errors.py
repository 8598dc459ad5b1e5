"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class BoundaryCrossingError(DomainError):
    """A free flight was asked to continue past the next wall contact."""


class DivergentMassError(DomainError):
    """The stationary state has infinite mass for the requested base."""


class StreamError(RuntimeError):
    """A random stream handle is invalid or exhausted."""


class TruncationError(RuntimeError):
    """A truncated lattice sum did not reach the requested tail tolerance."""

    def __init__(self, message, suggested_m_max=None):
        super().__init__(message)
        self.suggested_m_max = suggested_m_max


class PrecisionError(RuntimeError):
    """A finite-difference pair failed to converge."""


class ConfigError(ValueError):
    """Invalid run configuration. ``key`` names the offending field."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
