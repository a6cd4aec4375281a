"""Exception types shared across the package."""


class CoatError(Exception):
    """Base class for all package errors."""


class ConfigError(CoatError, ValueError):
    """Invalid configuration value or key."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class InputError(CoatError, ValueError):
    """Invalid argument passed to an operation."""


class NumericalError(CoatError, ArithmeticError):
    """Factorization failed even after jitter escalation."""


class TerminalError(CoatError):
    """A run cannot continue (e.g. the candidate set is exhausted)."""
