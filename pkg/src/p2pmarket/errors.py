"""Exception types shared across the package."""

from __future__ import annotations

from dataclasses import dataclass


class MarketError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(MarketError):
    """Raised when a config document is not valid JSON or misses required fields."""


@dataclass(frozen=True)
class Violation:
    """One violated model invariant, with a path into the offending field."""

    code: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} at {self.path}: {self.message}"


class ValidationError(MarketError):
    """Carries every invariant violation found in a candidate instance.

    Violation codes used by validation:
      NonPositiveCoefficient, AsymmetricCapacity, MissingRootLink,
      SymmetricPricePair, EmptyTightenedInterval, plus structural codes
      (BadShape, NonFiniteValue) for malformed numeric data.
    """

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"{len(self.violations)} invariant violation(s): {lines}")


class NegativeVariance(MarketError):
    """A report variance was negative."""


class DegenerateMechanism(MarketError):
    """Zero-variance mechanism asked to hide a nonzero deviation."""


class SymmetricPricePair(MarketError):
    """Bilateral trade prices c_nm == c_mn between non-root nodes.

    The saturation direction of the trade, and with it the closed-form
    trading cost, is undefined in this intermediate case.
    """


class Diverged(MarketError):
    """Solver iterates exceeded the divergence guard."""
