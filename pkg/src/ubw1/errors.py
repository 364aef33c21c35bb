"""Error types shared by every module.

Validation problems (bad input) derive from ``ValidationError`` and map to
CLI exit code 2; numerical trouble derives from ``NumericalError`` and maps
to exit code 1.
"""

from __future__ import annotations


class UbwError(Exception):
    """Base class; ``code`` is the short name printed by the CLI."""

    @property
    def code(self) -> str:
        return type(self).__name__


class ValidationError(UbwError, ValueError):
    pass


class NumericalError(UbwError, ArithmeticError):
    pass


class MassMismatch(ValidationError):
    pass


class EmptySpace(ValidationError):
    pass


class SpaceMismatch(ValidationError):
    pass


class InvalidMetric(ValidationError):
    pass


class NegativeMass(ValidationError):
    pass


class NegativeDensity(ValidationError):
    pass


class UnknownName(ValidationError):
    pass


class InvalidParameters(ValidationError):
    pass


class InfeasibleModel(ValidationError):
    pass


class InfeasibleChange(ValidationError):
    pass


class ModelMismatch(ValidationError):
    pass


class NotOptimalInput(ValidationError):
    pass


class InfeasiblePair(ValidationError):
    def __init__(self, points: list[int], message: str = ""):
        self.points = list(points)
        super().__init__(message or f"pairs outside the feasible set at points {self.points}")


class InfiniteCost(ValidationError):
    pass


class OutOfRange(ValidationError):
    pass


class CycleGuardExceeded(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class DegenerateSlope(NumericalError):
    pass


class Inconclusive(NumericalError):
    pass
