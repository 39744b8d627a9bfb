"""Exception types raised across platesim."""

from __future__ import annotations


class PlatesimError(Exception):
    """Base class for all platesim errors."""


class InvalidArgumentError(PlatesimError, ValueError):
    pass


class AliasingError(PlatesimError, ValueError):
    """Grid too coarse for the requested number of modes."""


class DimensionMismatchError(PlatesimError, ValueError):
    pass


class HypothesisViolation(PlatesimError):
    """A coefficient violates a declared standing hypothesis.

    Carries the offending location and value when known.
    """

    def __init__(self, message: str, *, where=None, value=None):
        super().__init__(message)
        self.where = where
        self.value = value


class NumericOverflowError(PlatesimError, ArithmeticError):
    pass


class DissipativityViolation(PlatesimError):
    pass


class BlowupError(PlatesimError):
    """Integration produced a non-finite or huge state."""

    def __init__(self, message: str, *, time: float):
        super().__init__(f"{message} (t={time:.6g})")
        self.time = time


class InfeasibleError(PlatesimError):
    pass


class DissipativityFailure(PlatesimError):
    """Simulated envelope does not settle; the configuration is suspect."""


class ConfigError(PlatesimError):
    """Configuration problems, all of them, not just the first."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class UnknownCatalogEntry(PlatesimError, KeyError):
    def __str__(self):  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""
