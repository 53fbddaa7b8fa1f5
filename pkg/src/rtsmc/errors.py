"""Exception types shared across the package."""


class RtsmcError(Exception):
    """Base class for all rtsmc errors."""


class InvalidSpec(RtsmcError, ValueError):
    """A continuous delay specification has a bad family or non-positive parameters."""


class EmptySupport(RtsmcError, ValueError):
    """No day bin survived the truncation threshold."""


class InsufficientHistory(RtsmcError, ValueError):
    """The infection history is shorter than the generation-time span."""


class MissingComponent(RtsmcError, ValueError):
    """A required delay distribution or scalar is absent for the requested kernel."""


class WindowTooShort(RtsmcError, ValueError):
    """The infection window does not cover the observation kernel."""


class NonpositiveVariance(RtsmcError, ValueError):
    """Gaussian likelihood requires a strictly positive variance."""


class InsufficientData(RtsmcError, ValueError):
    """The observed series is too short to initialise or run the filter."""


class LengthMismatch(RtsmcError, ValueError):
    """Paired series have different lengths."""


class ParseError(RtsmcError, ValueError):
    """A malformed input row or config entry.

    Carries the 1-based line number when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonMonotonicDates(RtsmcError, ValueError):
    """Input dates contain duplicates."""


class NegativeCount(RtsmcError, ValueError):
    """Counts must be non-negative."""


class ConfigError(RtsmcError, ValueError):
    """Unknown or invalid configuration key."""
