"""Command-line front end.

Subcommands: ``detect`` (run the detector over a data file), ``arl`` /
``delay`` / ``simulate`` (Monte-Carlo harness), ``klinf`` (information
constants), ``validate`` (built-in oracle suites).

Every run prints a single JSON document to stdout: the run manifest
embeds the fully resolved configuration, an input digest where there is
an input file, the result payload, wall time and library version.
Detection versus censoring is payload, not exit status; exit code 1
signals a usage or data error.  Set SCD_LOG=quiet|info|debug to control
logging on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from typing import Optional

from . import __version__
from .confseq import CsConfig
from .detector import DetectorConfig, run_stream
from .errors import ConfigError, DataDomainError, ScdError
from .intervals import ParamInterval
from .klinf import klinf_dual_argmax, klinf_two_sided
from .simulate import (
    DataGenModel,
    DistSpec,
    SimConfig,
    estimate_arl,
    estimate_delay,
    k_constants,
)
from .validate import run_lorden_suite, run_stop_domination_suite

log = logging.getLogger("scdetect")

_LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    level = os.environ.get("SCD_LOG", "quiet").lower()
    if level not in _LOG_LEVELS:
        level = "quiet"
    logging.basicConfig(stream=sys.stderr, level=_LOG_LEVELS[level],
                        format="%(levelname)s %(name)s: %(message)s")


# -- flat TOML-style config files -------------------------------------------


def _parse_config_value(raw: str):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw.startswith("'") and raw.endswith("'") and len(raw) >= 2:
        return raw[1:-1]
    low = raw.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def load_config_file(path: str) -> dict:
    """Flat ``key = value`` file, TOML-style; keys map 1:1 to flags."""
    data = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("["):
                raise ConfigError(
                    f"{path}:{lineno}: sections are not supported; "
                    "use flat key = value pairs matching the flags"
                )
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            if "#" in val and not val.strip().startswith(('"', "'")):
                val = val.split("#", 1)[0]
            data[key.strip().replace("-", "_")] = _parse_config_value(val)
    return data


def _apply_config_file(args: argparse.Namespace, argv: list) -> None:
    if not getattr(args, "config", None):
        return
    overrides = load_config_file(args.config)
    given = set()
    for tok in argv:
        if tok.startswith("--"):
            given.add(tok[2:].split("=", 1)[0].replace("-", "_"))
    for key, value in overrides.items():
        if key == "config" or key in given:
            continue
        if not hasattr(args, key):
            raise ConfigError(f"config file key {key!r} matches no flag")
        setattr(args, key, value)


# -- shared flag groups ------------------------------------------------------


def _add_cs_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=0.05,
                   help="miscoverage level in (0, 1) (default 0.05)")
    p.add_argument("--cs", choices=["betting", "hoeffding"], default="betting",
                   help="confidence-sequence family (default betting)")
    p.add_argument("--grid", type=int, default=101,
                   help="candidate-mean grid size (default 101)")
    p.add_argument("--strategy", choices=["mixture", "newton"], default="mixture",
                   help="betting strategy (default mixture)")
    p.add_argument("--hoeffding-lambda0", type=float, default=0.5,
                   help="fixed bet of the hoeffding family (default 0.5)")


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    _add_cs_flags(p)
    p.add_argument("--mode", choices=["non-partitioned", "partitioned"],
                   default="non-partitioned")
    p.add_argument("--theta0-lo", type=float, default=None,
                   help="lower edge of the known pre-change set (partitioned)")
    p.add_argument("--theta0-hi", type=float, default=None,
                   help="upper edge of the known pre-change set (partitioned)")
    p.add_argument("--schedule", default="every",
                   help="CS spawn schedule: 'every' or 'geometric:R' with R > 1")
    p.add_argument("--prune", choices=["on", "off"], default="off",
                   help="dominated-interval pruning (default off)")
    p.add_argument("--censor", type=int, default=None,
                   help="censoring horizon in observations")


def _add_config_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None,
                   help="flat TOML-style file of key = value pairs, 1:1 with flags")


def _build_detector_config(args: argparse.Namespace) -> DetectorConfig:
    cs = CsConfig(
        alpha=args.alpha,
        family=args.cs,
        grid_size=args.grid,
        strategy=args.strategy,
        hoeffding_lambda0=args.hoeffding_lambda0,
    )
    schedule = args.schedule
    ratio = 1.5
    if schedule.startswith("geometric"):
        name, sep, rest = schedule.partition(":")
        if name != "geometric" or not sep:
            raise ConfigError(f"bad --schedule {schedule!r}; use every|geometric:R")
        try:
            ratio = float(rest)
        except ValueError as exc:
            raise ConfigError(f"bad geometric ratio {rest!r}") from exc
        schedule = "geometric"
    elif schedule != "every":
        raise ConfigError(f"bad --schedule {schedule!r}; use every|geometric:R")
    theta0_set = None
    if args.mode == "partitioned":
        if args.theta0_lo is None or args.theta0_hi is None:
            raise ConfigError(
                "partitioned mode requires --theta0-lo and --theta0-hi"
            )
        theta0_set = ParamInterval(args.theta0_lo, args.theta0_hi)
    elif args.theta0_lo is not None or args.theta0_hi is not None:
        raise ConfigError("--theta0-lo/--theta0-hi only apply to partitioned mode")
    return DetectorConfig(
        cs=cs,
        mode=args.mode,
        theta0_set=theta0_set,
        schedule=schedule,
        geometric_ratio=ratio,
        prune="dominated" if args.prune == "on" else "off",
    )


def _detector_config_echo(config: DetectorConfig, censor: Optional[int]) -> dict:
    return {
        "alpha": config.cs.alpha,
        "family": config.cs.family,
        "grid_size": config.cs.grid_size,
        "strategy": config.cs.strategy,
        "mixture_bets": config.cs.mixture_bets,
        "hoeffding_lambda0": config.cs.hoeffding_lambda0,
        "mode": config.mode,
        "theta0_lo": config.theta0_set.lower if config.theta0_set else None,
        "theta0_hi": config.theta0_set.upper if config.theta0_set else None,
        "schedule": config.schedule,
        "geometric_ratio": config.geometric_ratio,
        "prune": config.prune,
        "censor": censor,
    }


def _emit(subcommand: str, config: dict, result: dict, t_start: float,
          input_digest: Optional[dict] = None) -> None:
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "config": config,
        "input": input_digest,
        "result": result,
        "wall_time_s": round(time.perf_counter() - t_start, 6),
    }
    json.dump(manifest, sys.stdout, indent=2)
    sys.stdout.write("\n")


# -- detect ------------------------------------------------------------------


def _read_values(path: str) -> list:
    """One value per record: CSV with optional 'x' header, or JSONL with
    field 'x'.  Errors cite the line number."""
    values = []
    is_jsonl = path.endswith((".jsonl", ".ndjson"))
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if is_jsonl or line.startswith("{"):
                try:
                    rec = json.loads(line)
                    val = rec["x"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise DataDomainError(
                        f"line {lineno}: expected JSON object with field 'x'"
                    ) from exc
            else:
                if lineno == 1 and line.lower().lstrip("﻿") == "x":
                    continue
                val = line
            try:
                x = float(val)
            except (TypeError, ValueError) as exc:
                raise DataDomainError(
                    f"line {lineno}: non-numeric value {val!r}"
                ) from exc
            if not (0.0 <= x <= 1.0) or math.isnan(x):
                raise DataDomainError(
                    f"line {lineno}: value {x} outside [0, 1]"
                )
            values.append(x)
    return values


def cmd_detect(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    config = _build_detector_config(args)
    values = _read_values(args.input)
    censor = args.censor if args.censor is not None else max(len(values), 1)
    digest = {
        "path": args.input,
        "n_values": len(values),
        "min": min(values) if values else None,
        "max": max(values) if values else None,
    }
    want_trace = args.diagnostics is not None
    report = run_stream(config, values, censor, record_trace=want_trace)
    if args.diagnostics is not None:
        tr = report.trace
        with open(args.diagnostics, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "lower", "upper", "active", "m_n"])
            for row in zip(tr.n, tr.global_lower, tr.global_upper,
                           tr.active_count, tr.spawned_count):
                writer.writerow(row)
        log.info("wrote per-step diagnostics to %s", args.diagnostics)
    _emit("detect", _detector_config_echo(config, censor),
          report.to_dict(), t0, input_digest=digest)
    return 0


# -- simulate / arl / delay --------------------------------------------------


def _parse_change_at(text: str) -> float:
    if text.lower() in ("inf", "infinity", "none"):
        return math.inf
    try:
        value = int(text)
    except ValueError as exc:
        raise ConfigError(f"--change-at must be a positive integer or 'inf', "
                          f"got {text!r}") from exc
    return value


def _build_sim_config(args: argparse.Namespace, *, force_change: Optional[str]
                      ) -> SimConfig:
    pre = DistSpec.parse(args.pre)
    post = DistSpec.parse(args.post) if args.post else None
    change_at = _parse_change_at(args.change_at)
    if force_change == "arl" and change_at != math.inf:
        raise ConfigError("arl runs require --change-at inf")
    if force_change == "delay" and change_at == math.inf:
        raise ConfigError("delay runs require a finite --change-at")
    model = DataGenModel(pre=pre, post=post, change_at=change_at, seed=args.seed)
    detector = _build_detector_config(args)
    return SimConfig(
        model=model,
        detector=detector,
        trials=args.trials,
        censor=args.censor,
        parallelism=args.parallel,
    )


def _write_trials_csv(path: str, report) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["trial", "tau", "censored_at", "delay_plus", "good_event"]
        )
        for r in report.per_trial:
            writer.writerow(
                [r.trial, r.tau, r.censored_at, r.delay_plus, r.good_event]
            )


def _run_sim(args: argparse.Namespace, subcommand: str) -> int:
    t0 = time.perf_counter()
    if subcommand == "arl":
        simcfg = _build_sim_config(args, force_change="arl")
        report = estimate_arl(simcfg)
    elif subcommand == "delay":
        simcfg = _build_sim_config(args, force_change="delay")
        report = estimate_delay(simcfg)
    else:  # simulate: dispatch on change_at
        simcfg = _build_sim_config(args, force_change=None)
        if simcfg.model.change_at == math.inf:
            report = estimate_arl(simcfg)
        else:
            report = estimate_delay(simcfg)
    if args.out:
        _write_trials_csv(args.out, report)
        log.info("wrote per-trial records to %s", args.out)
    _emit(subcommand, report.config_echo, report.to_dict(), t0)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    return _run_sim(args, "simulate")


def cmd_arl(args: argparse.Namespace) -> int:
    return _run_sim(args, "arl")


def cmd_delay(args: argparse.Namespace) -> int:
    return _run_sim(args, "delay")


# -- klinf -------------------------------------------------------------------


def cmd_klinf(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    dist_spec = DistSpec.parse(args.dist)
    dist, exact = dist_spec.to_discrete()
    config = {
        "dist": dist_spec.spec_string(),
        "theta": args.theta,
        "theta0": args.theta0,
        "theta0_lo": args.theta0_lo,
        "theta0_hi": args.theta0_hi,
        "delta": args.delta,
        "discretization": "exact" if exact else "quadrature",
    }
    if args.theta is not None:
        k, lam = klinf_dual_argmax(dist, args.theta)
        result = {"quantity": "klinf_dual", "K": k, "lambda": lam}
    elif args.theta0_lo is not None and args.theta0_hi is not None:
        model = DataGenModel(pre=dist_spec, post=dist_spec)
        kk = k_constants(
            model, ParamInterval(args.theta0_lo, args.theta0_hi), delta=0.0
        )
        result = {"quantity": "K2", "K": kk["K2"]}
    elif args.theta0 is not None and args.delta is not None:
        center = DistSpec.constant(args.theta0)
        model = DataGenModel(pre=center, post=dist_spec)
        kk = k_constants(model, None, delta=args.delta)
        result = {"quantity": "K1", "K": kk["K1"]}
    else:
        raise ConfigError(
            "klinf needs --theta, or --theta0-lo/--theta0-hi (K2), "
            "or --theta0 with --delta (K1)"
        )
    _emit("klinf", config, result, t0)
    return 0


# -- validate ----------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    shift = 1 if args.inject_off_by_one else 0
    suites = [
        run_stop_domination_suite(args.trials),
        run_lorden_suite(args.trials, inject_shift=shift),
    ]
    all_pass = all(s["passed"] for s in suites)
    result = {"suites": suites, "passed": all_pass}
    _emit("validate", {"trials": args.trials}, result, t0)
    for s in suites:
        status = "pass" if s["passed"] else "FAIL"
        log.info("suite %s: %s (%d scenarios)", s["suite"], status, s["scenarios"])
        if not s["passed"]:
            log.warning("failing seeds: %s", s["failures"])
    return 0 if all_pass else 1


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scdetect",
        description="Streaming change detection by repeated forward "
                    "confidence sequences.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("detect", help="run the detector over a data file")
    p.add_argument("--input", required=True,
                   help="CSV (one value per line, optional 'x' header) or "
                        "JSONL with field 'x'")
    _add_detector_flags(p)
    p.add_argument("--diagnostics", default=None,
                   help="write a per-step CSV n,lower,upper,active,m_n "
                        "(m_n = CSs spawned so far)")
    _add_config_flag(p)
    p.set_defaults(func=cmd_detect)

    for name, helptext in (
        ("simulate", "Monte-Carlo run; dispatches on --change-at"),
        ("arl", "Monte-Carlo average run length (no change)"),
        ("delay", "Monte-Carlo detection delay around a changepoint"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--pre", required=True,
                       help="pre-change law: bernoulli:p | beta:a,b | "
                            "twopoint:x0,x1,w | const:c")
        p.add_argument("--post", default=None, help="post-change law (same grammar)")
        p.add_argument("--change-at", default="inf",
                       help="changepoint index, or 'inf' for no change")
        p.add_argument("--trials", type=int, default=100)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--parallel", type=int, default=0,
                       help="worker processes (0 = one per CPU)")
        p.add_argument("--out", default=None, help="per-trial CSV path")
        _add_detector_flags(p)
        _add_config_flag(p)
        p.set_defaults(func={"simulate": cmd_simulate, "arl": cmd_arl,
                             "delay": cmd_delay}[name])

    p = sub.add_parser("klinf", help="KL information projection constants")
    p.add_argument("--dist", required=True,
                   help="distribution spec, e.g. bernoulli:0.9")
    p.add_argument("--theta", type=float, default=None,
                   help="candidate mean for the one-sided dual")
    p.add_argument("--theta0", type=float, default=None,
                   help="pre-change mean (K1, with --delta)")
    p.add_argument("--delta", type=float, default=None,
                   help="change magnitude (K1)")
    p.add_argument("--theta0-lo", type=float, default=None,
                   help="pre-change set lower edge (K2)")
    p.add_argument("--theta0-hi", type=float, default=None,
                   help="pre-change set upper edge (K2)")
    _add_config_flag(p)
    p.set_defaults(func=cmd_klinf)

    p = sub.add_parser("validate", help="run the built-in oracle suites")
    p.add_argument("--trials", type=int, default=60,
                   help="scenarios per suite (default 60)")
    p.add_argument("--inject-off-by-one", action="store_true",
                   help=argparse.SUPPRESS)
    _add_config_flag(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args, argv)
        return args.func(args)
    except (ScdError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
