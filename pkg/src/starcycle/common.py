"""Shared small types: sampling window, check verdicts, witness points."""

from __future__ import annotations

from dataclasses import dataclass, field


class StarcycleError(Exception):
    """Base class for errors raised by this package."""


PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Window:
    """Axis-aligned working window [-x_max, x_max] x [-y_max, y_max].

    All sampling-based checks and the inverse of the energy coordinate are
    confined to this region; it is configuration, not a property of the
    system itself.
    """

    x_max: float = 10.0
    y_max: float = 10.0

    def __post_init__(self):
        if not (self.x_max > 0 and self.y_max > 0):
            raise ValueError("window half-widths must be positive")

    @property
    def r_max(self) -> float:
        """Largest radius whose full circle fits inside the window."""
        return min(self.x_max, self.y_max)

    def contains(self, x: float, y: float) -> bool:
        return abs(x) <= self.x_max and abs(y) <= self.y_max

    def as_dict(self) -> dict:
        return {"x_max": self.x_max, "y_max": self.y_max}


@dataclass(frozen=True)
class Witness:
    """Sample point backing a verdict, with the offending field value."""

    x: float
    y: float
    value: float

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "value": self.value}


@dataclass
class CheckResult:
    """Outcome of one sampled hypothesis check."""

    name: str
    verdict: str  # PASS / FAIL / INCONCLUSIVE
    witnesses: list[Witness] = field(default_factory=list)
    sampled: int = 0
    window: Window = Window()
    tolerances: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "witnesses": [w.as_dict() for w in self.witnesses],
            "sampled": self.sampled,
            "window": self.window.as_dict(),
            "tolerances": self.tolerances,
        }


def scaled_zero_tolerance(x: float, y: float, base: float = 1e-9) -> float:
    """Zero-test tolerance that grows with the squared radius.

    Polynomial damping makes the radial scalar grow polynomially; a flat
    absolute tolerance would misclassify the far field.
    """
    return base * (1.0 + x * x + y * y)
