"""KL information projection onto mean classes, via its betting dual.

For a finite distribution P on [0, 1] and a candidate mean theta, the
divergence from P to the closest distribution with mean theta equals
the best achievable expected log wealth of a constant bet against
``mean = theta``.  The objective here is the one-sided form

    sup over lam in [0, 1/theta) of  E[log(1 + lam * (X - theta))],

which is positive exactly when mean(P) > theta; the opposite side is
obtained by mirroring x -> 1 - x.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataDomainError
from .golden import maximize_golden

__all__ = [
    "DiscreteDist",
    "klinf_dual",
    "klinf_dual_argmax",
    "klinf_two_sided",
    "bernoulli_kl",
]

_ENDPOINT_INSET = 1e-9


@dataclass(frozen=True)
class DiscreteDist:
    """Finite discrete distribution supported on [0, 1]."""

    values: tuple
    weights: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.size == 0 or v.size != w.size:
            raise ConfigError("values and weights must be nonempty, equal length")
        if np.any((v < 0.0) | (v > 1.0)):
            raise ConfigError("support must lie in [0, 1]")
        if np.any(w <= 0.0):
            raise ConfigError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"weights must sum to 1, got {w.sum()}")

    @classmethod
    def from_arrays(cls, values: Sequence[float], weights: Sequence[float]):
        return cls(tuple(float(v) for v in values), tuple(float(w) for w in weights))

    @classmethod
    def bernoulli(cls, p: float):
        if p <= 0.0:
            return cls((0.0,), (1.0,))
        if p >= 1.0:
            return cls((1.0,), (1.0,))
        return cls((0.0, 1.0), (1.0 - p, p))

    @classmethod
    def point_mass(cls, c: float):
        return cls((float(c),), (1.0,))

    @property
    def mean(self) -> float:
        v = np.asarray(self.values)
        w = np.asarray(self.weights)
        return float((v * w).sum())

    def mirrored(self) -> "DiscreteDist":
        return DiscreteDist(tuple(1.0 - v for v in self.values), self.weights)


def klinf_dual_argmax(
    dist: DiscreteDist, theta: float, *, tol: float = 1e-10
) -> tuple[float, float]:
    """(divergence in nats, maximizing bet) of the one-sided dual."""
    if not (0.0 < theta < 1.0):
        raise DataDomainError(f"theta must be in (0, 1), got {theta}")
    if dist.mean <= theta:
        return 0.0, 0.0
    v = np.asarray(dist.values)
    w = np.asarray(dist.weights)
    diffs = v - theta
    hi = 1.0 / theta - _ENDPOINT_INSET

    def objective(lam: float) -> float:
        return float((w * np.log1p(lam * diffs)).sum())

    lam_star, val = maximize_golden(objective, 0.0, hi, tol=tol)
    if val <= 0.0:
        return 0.0, 0.0
    return val, lam_star


def klinf_dual(dist: DiscreteDist, theta: float, *, tol: float = 1e-10) -> float:
    """One-sided KL information projection; 0 when mean(dist) <= theta."""
    return klinf_dual_argmax(dist, theta, tol=tol)[0]


def klinf_two_sided(dist: DiscreteDist, theta: float, *, tol: float = 1e-10) -> float:
    """Projection distance regardless of which side of theta the mean is."""
    if dist.mean > theta:
        return klinf_dual(dist, theta, tol=tol)
    if dist.mean < theta:
        return klinf_dual(dist.mirrored(), 1.0 - theta, tol=tol)
    return 0.0


def bernoulli_kl(p: float, q: float) -> float:
    """Closed-form KL(Bern(p) || Bern(q)) in nats; the independent oracle
    for the dual above when both sides are Bernoulli."""
    if not (0.0 < q < 1.0):
        raise DataDomainError(f"q must be in (0, 1), got {q}")
    total = 0.0
    if p > 0.0:
        total += p * np.log(p / q)
    if p < 1.0:
        total += (1.0 - p) * np.log((1.0 - p) / (1.0 - q))
    return float(total)
