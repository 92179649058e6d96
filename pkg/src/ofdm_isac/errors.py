"""Exception types raised across the package."""


class IsacError(Exception):
    """Base class for all package errors."""


class ConfigError(IsacError, ValueError):
    """Invalid system, optimizer or run configuration."""


class InfeasibleSensing(IsacError):
    """The sensing waveform has zero effective bandwidth (infinite CRB)."""


class EmptySensingSet(IsacError):
    """No sensing subcarrier carries positive power."""


class LambdaZero(IsacError):
    """Water-filling requested with a zero power price."""


class FewerPeaksThanPaths(IsacError):
    """The angular spectrum has fewer separable peaks than expected paths."""
