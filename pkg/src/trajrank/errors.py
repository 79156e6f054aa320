"""Exception types shared across the package."""


class TrajrankError(Exception):
    """Base class for all package-specific errors."""


class LengthMismatchError(TrajrankError, ValueError):
    """A sequence had a different length than the operation requires."""


class ConfigError(TrajrankError):
    """Invalid or inconsistent experiment configuration."""


class LineageError(TrajrankError):
    """An artifact was produced under a different configuration than expected."""


class DivergenceError(TrajrankError):
    """Training produced non-finite values."""
