"""Exception hierarchy shared across the package."""


class ChaosRCError(Exception):
    """Base class for all package errors."""


class ConfigError(ChaosRCError, ValueError):
    """An invalid parameter or configuration value."""


class BlowUpError(ChaosRCError, FloatingPointError):
    """A trajectory left the finite, bounded region (magnitude guard tripped)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SeriesTooShortError(ChaosRCError, ValueError):
    """Not enough history to build the requested features or samples."""


class DimensionMismatchError(ChaosRCError, ValueError):
    pass


class SingularSystemError(ChaosRCError, ArithmeticError):
    """Unregularized normal equations whose Gram matrix is not positive definite."""


class ConvergenceError(ChaosRCError, RuntimeError):
    pass


class FormatError(ChaosRCError, ValueError):
    """Malformed or unsupported file contents."""
