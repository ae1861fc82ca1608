"""Executable oracles for the detector's false-alarm analysis.

In simulation the true pre-change mean theta0 is known, so the analysis
objects become computable: each CS carries an e-process that jumps to
1/alpha once the CS stops covering theta0, their sum is an e-detector
M_n, and the detector can only stop after M_n has reached 1/alpha.
These quantities are validation instruments, not part of the production
detection path.

``lorden_tau`` is the second oracle: the same stopping time rebuilt as a
bank of independent one-sided sequential tests (start a fresh test at
every step, reject when the test's CS separates from the pre-change
set), bypassing all of the detector's bookkeeping.
"""

from __future__ import annotations

import math
from typing import Mapping, Optional, Sequence

from .confseq import new_cs
from .detector import DetectorConfig, DetectorTrace
from .errors import ConfigError, DataDomainError, PreconditionError
from .intervals import ParamInterval

__all__ = [
    "e_process_value",
    "e_detector_value",
    "check_stop_domination",
    "lorden_tau",
]


def e_process_value(
    m: int, n: int, cs_interval: ParamInterval, theta0: float, alpha: float
) -> float:
    """E-value attached to the CS started at m, evaluated at step n.

    Zero before the CS exists and while it covers theta0; 1/alpha once
    it does not (and, by nestedness, forever after).
    """
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    if n < m:
        return 0.0
    if cs_interval.contains(theta0):
        return 0.0
    return 1.0 / alpha


def e_detector_value(
    intervals: Mapping[int, ParamInterval], theta0: float, alpha: float, n: int
) -> float:
    """Sum of the per-start e-values: (1/alpha) times the number of
    spawned CSs currently not covering theta0."""
    for m in intervals:
        if m > n:
            raise PreconditionError(f"CS start {m} exceeds current step {n}")
    return sum(
        e_process_value(m, n, iv, theta0, alpha) for m, iv in intervals.items()
    )


def check_stop_domination(trace: DetectorTrace) -> bool:
    """Was every recorded detection preceded by M_n >= 1/alpha?

    Equivalent statement: at the stopping step some CS must have stopped
    covering theta0.  Only proven for the exact scheme, so traces from
    scheduled or pruned runs are rejected.
    """
    if not trace.is_exact:
        raise PreconditionError(
            "stop domination is only proven for every-step, pruning-off runs"
        )
    if trace.theta0 is None or trace.miss_count is None:
        raise PreconditionError("trace lacks the oracle theta0 miss counts")
    if trace.tau is None:
        return True
    for n, miss in zip(trace.n, trace.miss_count):
        if n >= trace.tau and miss < 1:
            return False
    return True


def trace_e_detector_values(trace: DetectorTrace) -> list[float]:
    """M_n per recorded step, from the oracle miss counts."""
    if trace.theta0 is None or trace.miss_count is None:
        raise PreconditionError("trace lacks the oracle theta0 miss counts")
    return [miss / trace.alpha for miss in trace.miss_count]


def lorden_tau(
    config: DetectorConfig,
    stream: Sequence[float],
    censor: int,
    *,
    _shift: int = 0,
) -> Optional[int]:
    """Detection time rebuilt as repeated independent sequential tests.

    For every start m, a fresh CS is run on x_m, x_{m+1}, ... and
    rejects at the first local time its interval is disjoint from the
    pre-change set; the detection time is min over m of (rejection
    local time + m - 1).  Returns None when censored.

    ``_shift`` exists for fault-injection tests only.
    """
    if config.mode != "partitioned":
        raise PreconditionError("lorden_tau requires partitioned mode")
    if not config.is_exact:
        raise PreconditionError(
            "lorden_tau is an oracle for the every-step, pruning-off scheme"
        )
    if censor < 1:
        raise ConfigError(f"censor must be >= 1, got {censor}")
    theta0_set = config.theta0_set
    xs = [float(x) for x in stream]
    for i, x in enumerate(xs):
        if not (0.0 <= x <= 1.0) or math.isnan(x):
            raise DataDomainError(f"stream value {x!r} at index {i} outside [0, 1]")
    horizon = min(len(xs), censor)
    best: Optional[int] = None
    for m in range(1, horizon + 1):
        if best is not None and m > best:
            break
        cs = new_cs(config.cs, start_index=m)
        for t in range(m, horizon + 1):
            if best is not None and t > best:
                break
            cs.update(xs[t - 1])
            if cs.interval().is_disjoint(theta0_set):
                local = t - m + 1
                candidate = local + m - 1 + _shift
                if best is None or candidate < best:
                    best = candidate
                break
    if best is not None and best > horizon:
        return None
    return best
