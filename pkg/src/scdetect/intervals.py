"""Closed subintervals of the unit parameter space [0, 1].

Intervals are the snapshot type for every confidence sequence in this
package.  The empty interval is encoded as ``lower > upper``; the
canonical empty value is ``ParamInterval(1.0, 0.0)``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

__all__ = ["ParamInterval", "EMPTY", "FULL"]


@dataclass(frozen=True)
class ParamInterval:
    """A closed subinterval of [0, 1], possibly empty.

    Nonempty intervals must satisfy 0 <= lower <= upper <= 1.
    """

    lower: float
    upper: float

    def __post_init__(self):
        if self.lower <= self.upper:
            if not (0.0 <= self.lower and self.upper <= 1.0):
                raise ConfigError(
                    f"nonempty interval must lie in [0, 1], got "
                    f"[{self.lower}, {self.upper}]"
                )

    @property
    def is_empty(self) -> bool:
        return self.lower > self.upper

    @property
    def width(self) -> float:
        return max(self.upper - self.lower, 0.0)

    def contains(self, theta: float) -> bool:
        return self.lower <= theta <= self.upper

    def intersect(self, other: "ParamInterval") -> "ParamInterval":
        lo = max(self.lower, other.lower)
        hi = min(self.upper, other.upper)
        if lo > hi:
            return EMPTY
        return ParamInterval(lo, hi)

    def is_superset(self, other: "ParamInterval") -> bool:
        """True if ``other`` (possibly empty) is contained in ``self``."""
        if other.is_empty:
            return True
        return self.lower <= other.lower and self.upper >= other.upper

    def is_disjoint(self, other: "ParamInterval") -> bool:
        return self.intersect(other).is_empty


EMPTY = ParamInterval(1.0, 0.0)
FULL = ParamInterval(0.0, 1.0)
