"""Exception types shared across the package.

The command-line driver maps these to exit codes: configuration problems
exit with 2, numerical failures with 3.
"""

__all__ = [
    "ConfigError",
    "NumericsError",
    "CFLViolation",
    "BlowupDetected",
    "IterationFailure",
]


class ConfigError(ValueError):
    """Invalid configuration: unknown key, bad type, or out-of-range value."""


class NumericsError(RuntimeError):
    """Base class for runtime numerical failures."""


class CFLViolation(NumericsError):
    """Time step too large for the advective stability bound."""


class BlowupDetected(NumericsError):
    """Non-finite values appeared during time integration."""


class IterationFailure(NumericsError):
    """An iterative solver failed to reach its tolerance."""
