"""Streaming change detector built from repeated forward CSs.

One detector step: spawn a fresh CS for the current index (so the CS
with start index m is built on observations m, m+1, ...), feed the new
observation to every active CS, recompute the intersection of all the
active CS intervals (and of the known pre-change set in partitioned
mode), and declare a detection the first time that intersection is
empty.

Two optimizations trade detection delay for work, never false-alarm
frequency: a geometric spawn schedule (fewer CSs) and dominated-interval
pruning (drop CSs that currently constrain nothing).  Both can only
postpone the stopping time relative to the exact every-step mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional

import numpy as np

from .confseq import CsConfig, make_bank, _check_obs
from .errors import ConfigError, DataDomainError, DetectorStateError
from .intervals import ParamInterval

__all__ = [
    "DetectorConfig",
    "DetectorTrace",
    "DetectionReport",
    "Detector",
    "init_detector",
    "run_stream",
    "global_intersection",
]


@dataclass(frozen=True)
class DetectorConfig:
    cs: CsConfig
    mode: Literal["non-partitioned", "partitioned"] = "non-partitioned"
    theta0_set: Optional[ParamInterval] = None
    schedule: Literal["every", "geometric"] = "every"
    geometric_ratio: float = 1.5
    prune: Literal["off", "dominated"] = "off"

    def __post_init__(self):
        if self.mode not in ("non-partitioned", "partitioned"):
            raise ConfigError(f"unknown detector mode {self.mode!r}")
        if self.mode == "partitioned":
            if self.theta0_set is None or self.theta0_set.is_empty:
                raise ConfigError("partitioned mode requires a nonempty theta0_set")
        if self.schedule not in ("every", "geometric"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "geometric" and not self.geometric_ratio > 1.0:
            raise ConfigError(
                f"geometric schedule needs ratio > 1, got {self.geometric_ratio}"
            )
        if self.prune not in ("off", "dominated"):
            raise ConfigError(f"unknown pruning mode {self.prune!r}")

    @property
    def is_exact(self) -> bool:
        """True for the every-step, no-pruning mode the proofs cover."""
        return self.schedule == "every" and self.prune == "off"


@dataclass
class DetectorTrace:
    """Per-step history of a detector run, for diagnostics and oracles."""

    alpha: float
    schedule: str
    prune: str
    theta0: Optional[float] = None
    n: list = field(default_factory=list)
    global_lower: list = field(default_factory=list)
    global_upper: list = field(default_factory=list)
    active_count: list = field(default_factory=list)
    spawned_count: list = field(default_factory=list)
    first_cs_lower: list = field(default_factory=list)
    first_cs_upper: list = field(default_factory=list)
    miss_count: Optional[list] = None
    cs_intervals: Optional[list] = None
    tau: Optional[int] = None

    @property
    def is_exact(self) -> bool:
        return self.schedule == "every" and self.prune == "off"


@dataclass
class DetectionReport:
    """Outcome of a censored detector run: exactly one of tau or
    censored_at is set."""

    tau: Optional[int]
    censored_at: Optional[int]
    n_cs_spawned: int
    n_cs_active_max: int
    trace: Optional[DetectorTrace] = None

    def __post_init__(self):
        if (self.tau is None) == (self.censored_at is None):
            raise ConfigError("exactly one of tau / censored_at must be present")

    @property
    def detected(self) -> bool:
        return self.tau is not None

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "censored_at": self.censored_at,
            "n_cs_spawned": self.n_cs_spawned,
            "n_cs_active_max": self.n_cs_active_max,
        }


def global_intersection(
    intervals: Iterable[ParamInterval], theta0_set: Optional[ParamInterval] = None
) -> ParamInterval:
    """Intersection of CS intervals and, if given, the pre-change set."""
    lo, hi = (0.0, 1.0) if theta0_set is None else (theta0_set.lower, theta0_set.upper)
    for iv in intervals:
        lo = max(lo, iv.lower)
        hi = min(hi, iv.upper)
    if lo > hi:
        return ParamInterval(1.0, 0.0)
    return ParamInterval(lo, hi)


class Detector:
    """Stateful repeated forward-CS detector.

    ``step`` returns the detection time the first time the global
    intersection empties, and None otherwise.  A stopped detector
    rejects further steps.
    """

    def __init__(
        self,
        config: DetectorConfig,
        *,
        theta0: Optional[float] = None,
        record_trace: bool = False,
        record_cs_intervals: bool = False,
    ):
        self.config = config
        self._bank = make_bank(config.cs)
        self.n = 0
        self.stopped_at: Optional[int] = None
        if config.mode == "partitioned":
            self._t0_lo = config.theta0_set.lower
            self._t0_hi = config.theta0_set.upper
        else:
            self._t0_lo, self._t0_hi = 0.0, 1.0
        self.n_cs_spawned = 0
        self.n_cs_active_max = 0
        self._next_spawn = 1
        self._spawn_exp = 0
        self.trace: Optional[DetectorTrace] = None
        self._theta0 = theta0
        if record_trace or record_cs_intervals:
            self.trace = DetectorTrace(
                alpha=config.cs.alpha,
                schedule=config.schedule,
                prune=config.prune,
                theta0=theta0,
                miss_count=[] if theta0 is not None else None,
                cs_intervals=[] if record_cs_intervals else None,
            )

    # -- step loop --------------------------------------------------------

    def _schedule_admits(self, n: int) -> bool:
        if self.config.schedule == "every":
            return True
        if n != self._next_spawn:
            return False
        r = self.config.geometric_ratio
        while math.ceil(r ** self._spawn_exp) <= n:
            self._spawn_exp += 1
        self._next_spawn = math.ceil(r ** self._spawn_exp)
        return True

    def global_interval(self) -> ParamInterval:
        lo, hi = self._t0_lo, self._t0_hi
        if self._bank.size:
            lo = max(lo, float(self._bank.lowers.max()))
            hi = min(hi, float(self._bank.uppers.min()))
        if lo > hi:
            return ParamInterval(1.0, 0.0)
        return ParamInterval(lo, hi)

    def step(self, x: float) -> Optional[int]:
        if self.stopped_at is not None:
            raise DetectorStateError(
                f"detector already stopped at tau={self.stopped_at}"
            )
        x = _check_obs(x)
        self.n += 1
        if self._schedule_admits(self.n):
            self._bank.spawn(self.n)
            self.n_cs_spawned += 1
        self._bank.update(x)
        lo, hi = self._t0_lo, self._t0_hi
        if self._bank.size:
            lo = max(lo, float(self._bank.lowers.max()))
            hi = min(hi, float(self._bank.uppers.min()))
        detected = lo > hi
        if detected:
            self.stopped_at = self.n
        elif self.config.prune == "dominated":
            self.prune_dominated()
        self.n_cs_active_max = max(self.n_cs_active_max, self._bank.size)
        if self.trace is not None:
            self._record(lo, hi)
            if detected:
                self.trace.tau = self.n
        return self.n if detected else None

    def _record(self, lo: float, hi: float) -> None:
        tr = self.trace
        tr.n.append(self.n)
        tr.global_lower.append(lo)
        tr.global_upper.append(hi)
        tr.active_count.append(self._bank.size)
        tr.spawned_count.append(self.n_cs_spawned)
        if self._bank.size:
            tr.first_cs_lower.append(float(self._bank.lowers[0]))
            tr.first_cs_upper.append(float(self._bank.uppers[0]))
        else:
            tr.first_cs_lower.append(0.0)
            tr.first_cs_upper.append(1.0)
        if tr.miss_count is not None:
            t0 = self._theta0
            lows = self._bank.lowers
            ups = self._bank.uppers
            tr.miss_count.append(int(((t0 < lows) | (t0 > ups)).sum()))
        if tr.cs_intervals is not None:
            tr.cs_intervals.append(
                (
                    self._bank.start_indices.copy(),
                    self._bank.lowers.copy(),
                    self._bank.uppers.copy(),
                )
            )

    # -- pruning ----------------------------------------------------------

    def prune_dominated(self) -> int:
        """Drop CSs whose interval contains the intersection of all other
        active constraints (they currently constrain nothing).

        The oldest CS is exempt: the delay guarantee is anchored on it.
        Removal can only postpone detection, so false-alarm control is
        unaffected.  Returns the number of CSs removed.
        """
        removed = 0
        while self._bank.size > 1:
            m = self._bank.size
            lo = self._bank.lowers
            hi = self._bank.uppers
            starts = self._bank.start_indices
            oldest = int(starts.argmin())
            i_max = int(lo.argmax())
            i_min = int(hi.argmin())
            rows = np.arange(m)
            lo2 = lo[rows != i_max].max()
            hi2 = hi[rows != i_min].min()
            lo_ex = np.where(rows == i_max, lo2, lo[i_max])
            hi_ex = np.where(rows == i_min, hi2, hi[i_min])
            other_lo = np.maximum(self._t0_lo, lo_ex)
            other_hi = np.minimum(self._t0_hi, hi_ex)
            dominated = (lo <= other_lo) & (hi >= other_hi)
            dominated[oldest] = False
            if not dominated.any():
                break
            # one removal at a time (youngest first), then re-check:
            # two mutually redundant CSs must not both be dropped
            j = int(np.flatnonzero(dominated)[starts[dominated].argmax()])
            keep = rows != j
            self._bank.keep_rows(keep)
            removed += 1
        return removed

    # -- introspection ------------------------------------------------------

    @property
    def active_intervals(self) -> list[ParamInterval]:
        return [self._bank.interval(i) for i in range(self._bank.size)]

    @property
    def active_start_indices(self) -> np.ndarray:
        return self._bank.start_indices.copy()

    @property
    def active_n_locals(self) -> np.ndarray:
        return self._bank.n_locals.copy()

    def check_state(self) -> None:
        """Debug invariant: the incremental global interval must equal a
        full recomputation from the active CS intervals."""
        t0 = None
        if self.config.mode == "partitioned":
            t0 = self.config.theta0_set
        expect = global_intersection(self.active_intervals, t0)
        got = self.global_interval()
        if expect.is_empty != got.is_empty:
            raise AssertionError(f"global mismatch: {got} vs {expect}")
        if not expect.is_empty:
            if not (
                math.isclose(expect.lower, got.lower, abs_tol=1e-12)
                and math.isclose(expect.upper, got.upper, abs_tol=1e-12)
            ):
                raise AssertionError(f"global mismatch: {got} vs {expect}")


def init_detector(config: DetectorConfig) -> Detector:
    """Fresh detector: no CSs yet; the global interval is the full
    parameter space (non-partitioned) or the pre-change set."""
    return Detector(config)


def run_stream(
    config: DetectorConfig,
    stream: Iterable[float],
    censor: int,
    *,
    theta0: Optional[float] = None,
    record_trace: bool = False,
    record_cs_intervals: bool = False,
) -> DetectionReport:
    """Feed a stream until detection or until ``censor`` observations.

    ``censor`` counts observations; a stream shorter than the censor
    yields ``censored_at`` equal to the number actually consumed.
    """
    if censor < 1:
        raise ConfigError(f"censor must be >= 1, got {censor}")
    det = Detector(
        config,
        theta0=theta0,
        record_trace=record_trace,
        record_cs_intervals=record_cs_intervals,
    )
    consumed = 0
    tau = None
    for i, x in enumerate(stream):
        if consumed >= censor:
            break
        xf = float(x)
        if not (0.0 <= xf <= 1.0) or math.isnan(xf):
            raise DataDomainError(f"stream value {x!r} at index {i} outside [0, 1]")
        tau = det.step(xf)
        consumed += 1
        if tau is not None:
            break
    return DetectionReport(
        tau=tau,
        censored_at=None if tau is not None else consumed,
        n_cs_spawned=det.n_cs_spawned,
        n_cs_active_max=det.n_cs_active_max,
        trace=det.trace,
    )
