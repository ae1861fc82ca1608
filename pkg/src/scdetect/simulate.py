"""Synthetic streams and Monte-Carlo estimation of run length and delay.

Streams are deterministic functions of (seed, trial index): each trial
owns a counter-based Philox generator keyed by the pair, so trials are
mutually independent and reproducible regardless of execution order or
worker count.  Aggregation is an ordered reduction over trial indices,
which makes reports bit-identical across parallelism levels.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np

from .confseq import width_envelope
from .detector import DetectorConfig, run_stream
from .edetector import check_stop_domination
from .errors import ConfigError
from .intervals import ParamInterval
from .klinf import DiscreteDist, klinf_two_sided

__all__ = [
    "DistSpec",
    "DataGenModel",
    "SimConfig",
    "TrialRecord",
    "SimReport",
    "gen_stream",
    "estimate_arl",
    "estimate_delay",
    "theoretical_delay_bound",
    "k_constants",
]

_SPEC_GRAMMAR = "bernoulli:p | beta:a,b | twopoint:x0,x1,w | const:c"


@dataclass(frozen=True)
class DistSpec:
    """A distribution on [0, 1] with a closed-form mean."""

    kind: str
    params: tuple

    def __post_init__(self):
        k, p = self.kind, self.params
        if k == "bernoulli":
            if len(p) != 1 or not (0.0 <= p[0] <= 1.0):
                raise ConfigError(f"bernoulli needs p in [0, 1], got {p}")
        elif k == "beta":
            if len(p) != 2 or p[0] <= 0.0 or p[1] <= 0.0:
                raise ConfigError(f"beta needs a, b > 0, got {p}")
        elif k == "twopoint":
            if len(p) != 3 or not all(0.0 <= v <= 1.0 for v in p):
                raise ConfigError(
                    f"twopoint needs x0, x1 in [0, 1] and weight w in [0, 1], got {p}"
                )
        elif k == "const":
            if len(p) != 1 or not (0.0 <= p[0] <= 1.0):
                raise ConfigError(f"const needs c in [0, 1], got {p}")
        else:
            raise ConfigError(f"unknown distribution kind {k!r} ({_SPEC_GRAMMAR})")

    @classmethod
    def parse(cls, text: str) -> "DistSpec":
        """Parse a spec string such as ``bernoulli:0.5`` or ``beta:2,5``."""
        try:
            kind, _, rest = text.strip().partition(":")
            params = tuple(float(tok) for tok in rest.split(",")) if rest else ()
            return cls(kind.lower(), params)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(
                f"cannot parse distribution spec {text!r}; grammar: {_SPEC_GRAMMAR}"
            ) from exc

    @classmethod
    def bernoulli(cls, p: float) -> "DistSpec":
        return cls("bernoulli", (float(p),))

    @classmethod
    def beta(cls, a: float, b: float) -> "DistSpec":
        return cls("beta", (float(a), float(b)))

    @classmethod
    def twopoint(cls, x0: float, x1: float, w: float) -> "DistSpec":
        return cls("twopoint", (float(x0), float(x1), float(w)))

    @classmethod
    def constant(cls, c: float) -> "DistSpec":
        return cls("const", (float(c),))

    @property
    def mean(self) -> float:
        k, p = self.kind, self.params
        if k == "bernoulli":
            return p[0]
        if k == "beta":
            return p[0] / (p[0] + p[1])
        if k == "twopoint":
            return (1.0 - p[2]) * p[0] + p[2] * p[1]
        return p[0]

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        k, p = self.kind, self.params
        if k == "bernoulli":
            return (rng.random(size) < p[0]).astype(float)
        if k == "beta":
            return rng.beta(p[0], p[1], size)
        if k == "twopoint":
            return np.where(rng.random(size) < p[2], p[1], p[0])
        return np.full(size, p[0])

    def to_discrete(self, quad_points: int = 1001) -> tuple[DiscreteDist, bool]:
        """Finite-support version: exact except for beta, which uses a
        midpoint quadrature grid (flagged approximate)."""
        k, p = self.kind, self.params
        if k == "bernoulli":
            return DiscreteDist.bernoulli(p[0]), True
        if k == "const":
            return DiscreteDist.point_mass(p[0]), True
        if k == "twopoint":
            x0, x1, w = p
            if w <= 0.0 or x0 == x1:
                return DiscreteDist.point_mass(x0 if w <= 0.0 else x1), True
            if w >= 1.0:
                return DiscreteDist.point_mass(x1), True
            return DiscreteDist.from_arrays((x0, x1), (1.0 - w, w)), True
        from scipy import stats

        xs = (np.arange(quad_points) + 0.5) / quad_points
        ws = stats.beta.pdf(xs, p[0], p[1])
        ws = ws / ws.sum()
        keep = ws > 0.0
        return DiscreteDist.from_arrays(xs[keep], ws[keep]), False

    def spec_string(self) -> str:
        return f"{self.kind}:{','.join(repr(v) for v in self.params)}"


@dataclass(frozen=True)
class DataGenModel:
    """Synthetic stream: pre-change law, post-change law, changepoint."""

    pre: DistSpec
    post: Optional[DistSpec] = None
    change_at: float = math.inf
    seed: int = 0

    def __post_init__(self):
        t = self.change_at
        if t != math.inf:
            if t != int(t) or t < 1:
                raise ConfigError(
                    f"change_at must be a positive integer or inf, got {t}"
                )
            if self.post is None:
                raise ConfigError("a finite change_at requires a post-change law")


def _trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial_index,))
    return np.random.Generator(np.random.Philox(ss))


def gen_stream(model: DataGenModel, trial_index: int, horizon: int) -> np.ndarray:
    """First min(T, horizon) draws from the pre law, the rest from post."""
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    rng = _trial_rng(model.seed, trial_index)
    n_pre = horizon if model.change_at == math.inf else min(int(model.change_at), horizon)
    parts = []
    if n_pre > 0:
        parts.append(model.pre.draw(rng, n_pre))
    if horizon > n_pre:
        parts.append(model.post.draw(rng, horizon - n_pre))
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


@dataclass(frozen=True)
class SimConfig:
    model: DataGenModel
    detector: DetectorConfig
    trials: int
    censor: Optional[int] = None
    parallelism: int = 0  # 0 = one worker per CPU

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.censor is not None and self.censor < 1:
            raise ConfigError(f"censor must be >= 1, got {self.censor}")
        if self.parallelism < 0:
            raise ConfigError(f"parallelism must be >= 0, got {self.parallelism}")


def resolved_censor(simcfg: SimConfig) -> int:
    """Default censoring horizons, documented bias directions:
    the censored ARL mean underestimates the true ARL; censored delays
    underestimate the true delay."""
    if simcfg.censor is not None:
        return simcfg.censor
    alpha = simcfg.detector.cs.alpha
    per_alpha = math.ceil(1.0 / alpha)
    if simcfg.model.change_at == math.inf:
        return 20 * per_alpha
    return max(50 * per_alpha, 10 * int(simcfg.model.change_at))


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    tau: Optional[int]
    censored_at: Optional[int]
    delay_plus: Optional[float] = None
    good_event: Optional[bool] = None
    stop_domination_ok: Optional[bool] = None
    miss_at_stop: Optional[int] = None


@dataclass
class SimReport:
    """Monte-Carlo estimates plus the matching theoretical quantities.

    Means are over the declared trial count; a category with no
    qualifying trials yields None and an entry in ``flags``.
    """

    kind: str
    trials: int
    censor: int
    alpha: float
    n_detected: int
    arl_censored_mean: Optional[float] = None
    arl_censored_fraction: Optional[float] = None
    delay_mean_conditional: Optional[float] = None
    delay_mean_unconditional: Optional[float] = None
    good_event_rate: Optional[float] = None
    degenerate_delta: bool = False
    theory: Optional[dict] = None
    flags: list = field(default_factory=list)
    per_trial: Optional[list] = None
    config_echo: dict = field(default_factory=dict)

    def to_dict(self, include_trials: bool = False) -> dict:
        out = {
            "kind": self.kind,
            "trials": self.trials,
            "censor": self.censor,
            "alpha": self.alpha,
            "n_detected": self.n_detected,
            "arl_censored_mean": self.arl_censored_mean,
            "arl_censored_fraction": self.arl_censored_fraction,
            "delay_mean_conditional": self.delay_mean_conditional,
            "delay_mean_unconditional": self.delay_mean_unconditional,
            "good_event_rate": self.good_event_rate,
            "degenerate_delta": self.degenerate_delta,
            "theory": self.theory,
            "flags": list(self.flags),
            "config": self.config_echo,
        }
        if include_trials and self.per_trial is not None:
            out["per_trial"] = [
                {
                    "trial": r.trial,
                    "tau": r.tau,
                    "censored_at": r.censored_at,
                    "delay_plus": r.delay_plus,
                    "good_event": r.good_event,
                }
                for r in self.per_trial
            ]
        return out


def _config_echo(simcfg: SimConfig, censor: int) -> dict:
    det = simcfg.detector
    cs = det.cs
    model = simcfg.model
    return {
        "pre": model.pre.spec_string(),
        "post": model.post.spec_string() if model.post is not None else None,
        "change_at": None if model.change_at == math.inf else int(model.change_at),
        "seed": model.seed,
        "alpha": cs.alpha,
        "family": cs.family,
        "grid_size": cs.grid_size,
        "strategy": cs.strategy,
        "mixture_bets": cs.mixture_bets,
        "hoeffding_lambda0": cs.hoeffding_lambda0,
        "mode": det.mode,
        "theta0_lo": det.theta0_set.lower if det.theta0_set else None,
        "theta0_hi": det.theta0_set.upper if det.theta0_set else None,
        "schedule": det.schedule,
        "geometric_ratio": det.geometric_ratio,
        "prune": det.prune,
        "trials": simcfg.trials,
        "censor": censor,
        "parallelism": simcfg.parallelism,
    }


def _arl_trial(simcfg: SimConfig, trial: int) -> TrialRecord:
    censor = resolved_censor(simcfg)
    theta0 = simcfg.model.pre.mean
    stream = gen_stream(simcfg.model, trial, censor)
    rep = run_stream(
        simcfg.detector, stream, censor, theta0=theta0, record_trace=True
    )
    dom = None
    if simcfg.detector.is_exact:
        dom = check_stop_domination(rep.trace)
    miss = rep.trace.miss_count[-1] if rep.trace.miss_count else None
    return TrialRecord(
        trial=trial,
        tau=rep.tau,
        censored_at=rep.censored_at,
        stop_domination_ok=dom,
        miss_at_stop=miss,
    )


def _delay_trial(simcfg: SimConfig, trial: int) -> TrialRecord:
    censor = resolved_censor(simcfg)
    theta0 = simcfg.model.pre.mean
    t_change = int(simcfg.model.change_at)
    stream = gen_stream(simcfg.model, trial, censor)
    rep = run_stream(
        simcfg.detector, stream, censor, theta0=theta0, record_trace=True
    )
    tr = rep.trace
    good = True
    for i, n in enumerate(tr.n):
        if n > t_change:
            break
        if not (tr.first_cs_lower[i] <= theta0 <= tr.first_cs_upper[i]):
            good = False
            break
    stop_n = rep.tau if rep.tau is not None else rep.censored_at
    delay_plus = float(max(stop_n - t_change, 0))
    dom = None
    if simcfg.detector.is_exact:
        dom = check_stop_domination(tr)
    miss = tr.miss_count[-1] if tr.miss_count else None
    return TrialRecord(
        trial=trial,
        tau=rep.tau,
        censored_at=rep.censored_at,
        delay_plus=delay_plus,
        good_event=good,
        stop_domination_ok=dom,
        miss_at_stop=miss,
    )


def _run_trials(worker, simcfg: SimConfig) -> list:
    trials = simcfg.trials
    workers = simcfg.parallelism if simcfg.parallelism > 0 else (os.cpu_count() or 1)
    workers = max(1, min(workers, trials))
    if workers == 1:
        return [worker(simcfg, i) for i in range(trials)]
    fn = partial(worker, simcfg)
    chunk = max(1, trials // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(trials), chunksize=chunk))


def estimate_arl(simcfg: SimConfig) -> SimReport:
    """Censored Monte-Carlo estimate of the average run length.

    Requires a no-change model.  The mean of min(tau, censor) is a lower
    bound on the true ARL, so checks of the form 'ARL >= 1/alpha' stay
    conservative under censoring.
    """
    if simcfg.model.change_at != math.inf:
        raise ConfigError("estimate_arl requires model.change_at = inf")
    censor = resolved_censor(simcfg)
    records = _run_trials(_arl_trial, simcfg)
    stops = [r.tau if r.tau is not None else r.censored_at for r in records]
    n_detected = sum(1 for r in records if r.tau is not None)
    report = SimReport(
        kind="arl",
        trials=simcfg.trials,
        censor=censor,
        alpha=simcfg.detector.cs.alpha,
        n_detected=n_detected,
        arl_censored_mean=float(np.mean(stops)),
        arl_censored_fraction=1.0 - n_detected / simcfg.trials,
        per_trial=records,
        config_echo=_config_echo(simcfg, censor),
    )
    report.flags.append("censored mean underestimates the true average run length")
    return report


def estimate_delay(simcfg: SimConfig) -> SimReport:
    """Monte-Carlo detection delay around a known changepoint.

    The conditional mean averages (tau - T)+ over trials where detection
    occurred and the first CS covered the true pre-change mean up to the
    changepoint; the unconditional mean covers all trials, counting
    censored runs at the censoring horizon (a downward-biased proxy).
    """
    if simcfg.model.change_at == math.inf:
        raise ConfigError("estimate_delay requires a finite model.change_at")
    censor = resolved_censor(simcfg)
    t_change = int(simcfg.model.change_at)
    records = _run_trials(_delay_trial, simcfg)
    n_detected = sum(1 for r in records if r.tau is not None)
    delays_all = [r.delay_plus for r in records]
    delays_cond = [
        r.delay_plus for r in records if r.tau is not None and r.good_event
    ]
    report = SimReport(
        kind="delay",
        trials=simcfg.trials,
        censor=censor,
        alpha=simcfg.detector.cs.alpha,
        n_detected=n_detected,
        delay_mean_unconditional=float(np.mean(delays_all)),
        good_event_rate=float(np.mean([r.good_event for r in records])),
        per_trial=records,
        config_echo=_config_echo(simcfg, censor),
    )
    if delays_cond:
        report.delay_mean_conditional = float(np.mean(delays_cond))
    else:
        report.flags.append("no detected trial with the good event; "
                            "conditional delay undefined")
    if n_detected < simcfg.trials:
        report.flags.append(
            f"{simcfg.trials - n_detected} censored runs counted at the horizon"
        )
    report.theory = _delay_theory(simcfg, report, t_change)
    return report


def _delay_theory(simcfg: SimConfig, report: SimReport, t_change: int) -> dict:
    model = simcfg.model
    det = simcfg.detector
    cs = det.cs
    theta0 = model.pre.mean
    theta1 = model.post.mean
    delta = abs(theta1 - theta0)
    theory: dict = {"delta": delta}
    if delta == 0.0:
        report.degenerate_delta = True
        report.flags.append("pre and post means coincide (delta = 0); "
                            "no delay guarantee applies")
        return theory
    post_dist, exact = model.post.to_discrete()
    theory["k_discretization"] = "exact" if exact else "quadrature"
    kk = k_constants(model, det.theta0_set if det.mode == "partitioned" else None,
                     delta)
    theory.update(kk)
    if det.mode == "partitioned":
        t0 = det.theta0_set
        gap = max(t0.lower - theta1, theta1 - t0.upper, 0.0)
        theory["gap"] = gap
        if gap > 0.0:
            u, bound = theoretical_delay_bound(
                cs.family, cs.alpha, gap,
                hoeffding_lambda0=cs.hoeffding_lambda0,
            )
            theory["u"] = u
            theory["delay_bound"] = bound
        else:
            report.flags.append("post-change mean lies in theta0_set; "
                                "no partitioned delay bound")
    else:
        try:
            u, bound = theoretical_delay_bound(
                cs.family, cs.alpha, delta, T=t_change,
                hoeffding_lambda0=cs.hoeffding_lambda0,
            )
            theory["u"] = u
            theory["delay_bound"] = bound
        except ConfigError as exc:
            report.flags.append(str(exc))
    return theory


def _envelope_values(family: str, ns: np.ndarray, alpha: float,
                     lambda0: float) -> np.ndarray:
    ns = ns.astype(float)
    if family == "betting":
        vals = 4.0 * np.sqrt(np.log(ns / alpha) / ns)
    elif family == "hoeffding":
        vals = 2.0 * (math.log(2.0 / alpha) + ns * lambda0 ** 2 / 8.0) / (ns * lambda0)
    else:
        raise ConfigError(f"unknown CS family {family!r}")
    return np.minimum(vals, 1.0)


def theoretical_delay_bound(
    family: str,
    alpha: float,
    d_gap: float,
    T: Optional[int] = None,
    *,
    hoeffding_lambda0: float = 0.5,
    max_scan: int = 100_000_000,
) -> tuple[int, float]:
    """Block length u and the delay bound 3 u / (1 - alpha).

    ``u`` is the first n at which the width envelope (plus, for the
    non-partitioned variant with changepoint T, the envelope at T) drops
    below the mean gap.  Found by linear scan, which is the definition.
    """
    if d_gap <= 0.0:
        raise ConfigError(f"d_gap must be positive, got {d_gap}")
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    base = 0.0
    if T is not None:
        base = width_envelope(family, T, alpha, hoeffding_lambda0=hoeffding_lambda0)
        if base >= d_gap:
            raise ConfigError(
                f"changepoint too early for the delay guarantee: envelope at "
                f"T={T} is {base:.6g} >= gap {d_gap:.6g}"
            )
    start = 1
    chunk = 4096
    while start <= max_scan:
        ns = np.arange(start, min(start + chunk, max_scan + 1))
        ok = base + _envelope_values(family, ns, alpha, hoeffding_lambda0) < d_gap
        hits = np.flatnonzero(ok)
        if hits.size:
            u = int(ns[hits[0]])
            return u, 3.0 * u / (1.0 - alpha)
        start += chunk
        chunk = min(2 * chunk, 1 << 22)
    raise ConfigError(f"no finite u below scan limit {max_scan} for gap {d_gap}")


def k_constants(
    model: DataGenModel,
    theta0_set: Optional[ParamInterval] = None,
    delta: Optional[float] = None,
    *,
    grid_points: int = 101,
) -> dict:
    """Information constants of the post-change law.

    K1: divergence from the post law to the closest mean within delta/2
    of the pre-change mean.  K2: divergence to the closest mean in the
    known pre-change set (None when no set is given).  Both are grid
    minima of the dual projection, using whichever side of the dual the
    sign of (theta - mean) calls for.
    """
    if model.post is None:
        raise ConfigError("k_constants requires a post-change law")
    dist, _ = model.post.to_discrete()
    theta0 = model.pre.mean
    if delta is None:
        delta = abs(model.post.mean - theta0)
    eps = 1e-9

    def grid_min(lo: float, hi: float) -> float:
        lo = max(lo, 0.0)
        hi = min(hi, 1.0)
        thetas = np.unique(np.clip(np.linspace(lo, hi, grid_points), eps, 1.0 - eps))
        return min(klinf_two_sided(dist, float(t)) for t in thetas)

    out: dict = {"K1": None, "K2": None}
    if delta > 0.0:
        out["K1"] = grid_min(theta0 - delta / 2.0, theta0 + delta / 2.0)
    if theta0_set is not None and not theta0_set.is_empty:
        out["K2"] = grid_min(theta0_set.lower, theta0_set.upper)
    return out
