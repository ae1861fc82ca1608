"""Built-in seeded validation suites.

Two oracle suites back the detector's bookkeeping:

* stop domination: on exact-mode no-change runs with the true mean known
  to the simulator, every detection must be preceded by the e-detector
  reaching 1/alpha (equivalently, some CS must have stopped covering the
  true mean);
* repeated-test equivalence: in partitioned mode the detector's stopping
  time is rebuilt as a bank of independent sequential tests and compared
  for exact equality, censoring included.

Scenario construction keeps to the partitioned problem's premises: the
pre-change mean lies in the (narrow or singleton) pre-change set and the
post-change mean sits well outside it, so the equivalence is exact and
any mismatch indicates an indexing bug.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .confseq import CsConfig
from .detector import DetectorConfig, run_stream
from .edetector import check_stop_domination, lorden_tau, trace_e_detector_values
from .intervals import ParamInterval
from .simulate import DataGenModel, DistSpec, gen_stream

__all__ = [
    "LordenScenario",
    "lorden_scenario",
    "run_lorden_suite",
    "run_stop_domination_suite",
]


@dataclass(frozen=True)
class LordenScenario:
    seed: int
    alpha: float
    theta0_set: ParamInterval
    model: DataGenModel
    length: int


def lorden_scenario(seed: int, *, max_length: int = 50) -> LordenScenario:
    """Deterministic random scenario for the equivalence suite."""
    rng = np.random.default_rng(10_000 + seed)
    alpha = float(rng.choice([0.1, 0.25]))
    width = float(rng.choice([0.0, rng.uniform(0.0, 0.2)]))
    center = float(rng.uniform(0.15, 0.85))
    lo = max(0.0, center - width / 2.0)
    hi = min(1.0, center + width / 2.0)
    theta0 = float(rng.uniform(lo, hi))
    # post-change mean well outside the pre-change set, on a random side
    gap = float(rng.uniform(0.35, 0.6))
    if rng.random() < 0.5 and hi + gap <= 1.0:
        theta1 = hi + gap
    elif lo - gap >= 0.0:
        theta1 = lo - gap
    else:
        theta1 = min(hi + gap, 1.0)
    no_change = rng.random() < 0.3
    change_at = math.inf if no_change else int(rng.integers(0, 21)) + 1
    if 0.05 < theta0 < 0.95 and rng.random() < 0.5:
        pre = DistSpec.beta(5.0 * theta0, 5.0 * (1.0 - theta0))  # mean theta0
    else:
        pre = DistSpec.bernoulli(theta0)
    post = DistSpec.bernoulli(theta1)
    length = int(rng.integers(25, max_length + 1))
    model = DataGenModel(pre=pre, post=post, change_at=change_at, seed=31337)
    return LordenScenario(
        seed=seed,
        alpha=alpha,
        theta0_set=ParamInterval(lo, hi),
        model=model,
        length=length,
    )


def run_lorden_suite(
    n_scenarios: int,
    *,
    cs_kwargs: Optional[dict] = None,
    inject_shift: int = 0,
) -> dict:
    """Compare detector and repeated-test stopping times on seeded streams.

    Returns a summary dict with the failing seeds (exact equality is
    required, censoring included).  ``inject_shift`` exists for fault
    injection in tests of the suite itself.
    """
    failures = []
    n_detected = 0
    for seed in range(n_scenarios):
        sc = lorden_scenario(seed)
        cs = CsConfig(alpha=sc.alpha, **(cs_kwargs or {}))
        config = DetectorConfig(
            cs=cs, mode="partitioned", theta0_set=sc.theta0_set
        )
        stream = gen_stream(sc.model, seed, sc.length)
        rep = run_stream(config, stream, sc.length)
        oracle = lorden_tau(config, stream, sc.length, _shift=inject_shift)
        if rep.tau is not None:
            n_detected += 1
        if rep.tau != oracle:
            failures.append(
                {"seed": seed, "detector_tau": rep.tau, "lorden_tau": oracle}
            )
    return {
        "suite": "lorden_equivalence",
        "scenarios": n_scenarios,
        "detected": n_detected,
        "failures": failures,
        "passed": not failures,
    }


def run_stop_domination_suite(
    n_runs: int,
    *,
    alpha: float = 0.2,
    horizon: int = 60,
    cs_kwargs: Optional[dict] = None,
) -> dict:
    """Exact-mode no-change runs: check stop domination and that the
    e-detector path n -> M_n never decreases."""
    failures = []
    n_detected = 0
    model = DataGenModel(pre=DistSpec.bernoulli(0.5), seed=777)
    cs = CsConfig(alpha=alpha, **(cs_kwargs or {}))
    config = DetectorConfig(cs=cs)
    for seed in range(n_runs):
        stream = gen_stream(model, seed, horizon)
        rep = run_stream(
            config, stream, horizon, theta0=0.5, record_trace=True
        )
        if rep.tau is not None:
            n_detected += 1
        ok = check_stop_domination(rep.trace)
        m_vals = trace_e_detector_values(rep.trace)
        monotone = all(b >= a for a, b in zip(m_vals, m_vals[1:]))
        if not (ok and monotone):
            failures.append(
                {"seed": seed, "stop_domination": ok, "monotone": monotone}
            )
    return {
        "suite": "stop_domination",
        "scenarios": n_runs,
        "detected": n_detected,
        "failures": failures,
        "passed": not failures,
    }
