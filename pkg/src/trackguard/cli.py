"""Command-line entry point.

Subcommands: synth (offline terminal-set pipeline), verify (nonlinear
invariance check of an artifact), simulate (batch episodes from a scenario
file), serve (live driving session), report (aggregate metrics over logs).

Exit codes: 0 success, 2 configuration error, 3 pipeline/solver error,
4 assertion failure in `report --assert`.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .filter import FilterConfig
from .ocp import SqpSettings
from .sim import PolicySpec, SimConfig, run_episode, save_log, load_log
from .terminal import (SynthesisConfig, SynthesisError, TerminalSet,
                       shrink_until_verified, synthesize, verify_nonlinear)
from .track import LookaheadConfig, TrackError, load_track
from .vehicle import VehicleParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PIPELINE = 3
EXIT_ASSERT = 4


class CliError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


def _load_params(path) -> VehicleParams:
    try:
        return VehicleParams.from_file(path) if path else VehicleParams()
    except (OSError, ValueError, json.JSONDecodeError) as e:
        raise CliError(f"vehicle parameters: {e}", EXIT_CONFIG) from e


def _load_track(path):
    try:
        return load_track(path)
    except (OSError, TrackError) as e:
        raise CliError(f"track: {e}", EXIT_CONFIG) from e


def _load_synthesis_config(path) -> SynthesisConfig:
    try:
        return SynthesisConfig.from_file(path) if path else SynthesisConfig()
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as e:
        raise CliError(f"synthesis config: {e}", EXIT_CONFIG) from e


def filter_config_from_dict(doc: dict) -> FilterConfig:
    kw = dict(doc)
    for key in ("W", "R_S"):
        if key in kw:
            arr = np.asarray(kw[key], dtype=float)
            kw[key] = np.diag(arr) if arr.ndim == 1 else arr
    if "lookahead" in kw:
        kw["lookahead"] = LookaheadConfig(**kw["lookahead"])
    if "sqp" in kw:
        sq = dict(kw["sqp"])
        if "step_trust" in sq and sq["step_trust"] is not None:
            sq["step_trust"] = np.asarray(sq["step_trust"], dtype=float)
        defaults = FilterConfig().sqp
        kw["sqp"] = replace(defaults, **sq)
    return FilterConfig(**kw)


def _load_filter_config(path) -> FilterConfig:
    if not path:
        return FilterConfig()
    try:
        return filter_config_from_dict(json.loads(Path(path).read_text()))
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as e:
        raise CliError(f"filter config: {e}", EXIT_CONFIG) from e


# -- synth ----------------------------------------------------------------------

def cmd_synth(args) -> int:
    params = _load_params(args.params)
    cfg = _load_synthesis_config(args.config)
    stage = "steady-state"
    try:
        ts, rep = synthesize(cfg, params)
        stage = "verification"
        ts = shrink_until_verified(ts, params, cfg)
    except SynthesisError as e:
        print(f"synthesis failed at stage '{stage}': {e}", file=sys.stderr)
        return EXIT_PIPELINE
    ts.save(args.out)

    v = ts.provenance["verification"]
    lines = [
        "terminal set synthesis report",
        f"  grid points          : {cfg.n_c} over [{-cfg.c_max}, {cfg.c_max}] 1/m",
        f"  target speed         : {cfg.v_x_target} m/s",
        f"  steady-state residual: max {rep.steady_state_residuals.max():.3e}",
        f"  lyapunov residual    : max {rep.lyapunov_residuals.max():.3e}",
        f"  containment residual : min {rep.containment_residuals.min():.3e}",
        f"  sdp solver           : {rep.solver} ({rep.solve_time:.2f} s)",
        f"  alpha                : {ts.alpha:.6f}",
        f"  verification         : worst {v['worst_objective']:.6f} at "
        f"c={v['worst_curvature']:.3f} over {v['n_starts']} starts "
        f"(verified={v['verified']})",
    ]
    report = "\n".join(lines)
    print(report)
    if args.report:
        Path(args.report).write_text(report + "\n")
    return EXIT_OK


# -- verify ---------------------------------------------------------------------

def cmd_verify(args) -> int:
    params = _load_params(args.params)
    if args.n_starts <= 0:
        print("n_starts must be positive; a zero-start report is vacuous",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        ts = TerminalSet.load(args.artifact)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"artifact: {e}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = _load_synthesis_config(args.config)
    cfg = replace(cfg, n_verify_starts=args.n_starts, seed=args.seed)
    rep = verify_nonlinear(ts, params, cfg)
    doc = rep.to_dict()
    print(json.dumps(doc, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


# -- simulate --------------------------------------------------------------------

def _scenario(path):
    try:
        doc = json.loads(Path(path).read_text())
        policy = PolicySpec(**doc.get("policy", {}))
        faults = [tuple(f) for f in policy.faults]
        policy.faults = faults
        sim = SimConfig(**doc.get("sim", {}))
        return policy, sim, doc
    except (OSError, TypeError, ValueError, json.JSONDecodeError) as e:
        raise CliError(f"scenario: {e}", EXIT_CONFIG) from e


def cmd_simulate(args) -> int:
    params = _load_params(args.params)
    track = _load_track(args.track)
    try:
        ts = TerminalSet.load(args.terminal_set)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"artifact: {e}", file=sys.stderr)
        return EXIT_CONFIG
    fcfg = _load_filter_config(args.filter_config)
    policy, sim, doc = _scenario(args.scenario)

    log = run_episode(track, params, ts, policy, sim, fcfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.scenario).stem
    log_path = out_dir / f"{stem}.{args.format}"
    save_log(log, log_path, args.format)

    iv = log.column("intervention")
    solve = log.column("solve_ms")
    corners = np.maximum(np.abs(log.column("e_lf")), np.abs(log.column("e_rf")))
    summary = {
        "scenario": stem,
        "steps": len(log),
        "laps": log.laps,
        "breach": log.breach,
        "breach_time": log.breach_time,
        "max_corner_error": float(corners.max()) if len(log) else None,
        "intervention_p50": float(np.percentile(iv, 50)) if len(log) else None,
        "intervention_p95": float(np.percentile(iv, 95)) if len(log) else None,
        "solve_ms_p50": float(np.percentile(solve, 50)) if len(log) else None,
        "solve_ms_p95": float(np.percentile(solve, 95)) if len(log) else None,
        "log": str(log_path),
    }
    (out_dir / f"{stem}.summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))
    return EXIT_OK


# -- serve -----------------------------------------------------------------------

def cmd_serve(args) -> int:
    from .service import serve
    params = _load_params(args.params)
    track = _load_track(args.track)
    try:
        ts = TerminalSet.load(args.terminal_set)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"artifact: {e}", file=sys.stderr)
        return EXIT_CONFIG
    fcfg = _load_filter_config(args.filter_config)
    print(f"serving on {args.bind} (lockstep={args.lockstep})")
    serve(track, params, ts, bind=args.bind, filter_cfg=fcfg,
          lockstep=args.lockstep, static_dir=args.static_dir)
    return EXIT_OK


# -- report ----------------------------------------------------------------------

def cmd_report(args) -> int:
    if not args.logs:
        print("no log files given", file=sys.stderr)
        return EXIT_CONFIG
    logs = []
    for path in args.logs:
        try:
            logs.append(load_log(path))
        except (OSError, ValueError) as e:
            print(f"log {path}: {e}", file=sys.stderr)
            return EXIT_CONFIG

    interventions = np.concatenate([lg.column("intervention") for lg in logs])
    solve = np.concatenate([lg.column("solve_ms") for lg in logs])
    breaches = sum(bool(lg.breach) for lg in logs)
    laps = sum(lg.laps for lg in logs)
    edges = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.5, np.inf]
    hist, _ = np.histogram(interventions, bins=edges)
    doc = {
        "episodes": len(logs),
        "steps": int(sum(len(lg) for lg in logs)),
        "laps": float(laps),
        "breaches": int(breaches),
        "intervention_histogram": {
            f"<{edges[i+1]:g}": int(hist[i]) for i in range(len(hist))},
        "intervention_p50": float(np.percentile(interventions, 50)),
        "intervention_p95": float(np.percentile(interventions, 95)),
        "solve_ms_p50": float(np.percentile(solve, 50)),
        "solve_ms_p95": float(np.percentile(solve, 95)),
    }
    print(json.dumps(doc, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")

    if args.assert_no_breach and breaches:
        print(f"assertion failed: {breaches} breach(es)", file=sys.stderr)
        return EXIT_ASSERT
    if args.assert_intervention_p95 is not None \
            and doc["intervention_p95"] > args.assert_intervention_p95:
        print("assertion failed: intervention p95 "
              f"{doc['intervention_p95']:.4g} > {args.assert_intervention_p95}",
              file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="trackguard",
                                 description="Predictive safety filter toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesize and verify a terminal set")
    s.add_argument("--config", default=None, help="synthesis config JSON")
    s.add_argument("--params", default=None, help="vehicle parameter JSON")
    s.add_argument("--out", default="terminal_set.json")
    s.add_argument("--report", default=None, help="write the text report here")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("verify", help="re-verify an existing artifact")
    s.add_argument("--artifact", required=True)
    s.add_argument("--params", default=None)
    s.add_argument("--config", default=None)
    s.add_argument("--n-starts", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="run a batch scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--track", required=True)
    s.add_argument("--params", default=None)
    s.add_argument("--terminal-set", required=True)
    s.add_argument("--filter-config", default=None)
    s.add_argument("--out-dir", default="runs")
    s.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("serve", help="run the live driving service")
    s.add_argument("--bind", default="127.0.0.1:8080")
    s.add_argument("--track", required=True)
    s.add_argument("--params", default=None)
    s.add_argument("--terminal-set", required=True)
    s.add_argument("--filter-config", default=None)
    s.add_argument("--lockstep", action="store_true",
                   help="advance one step per input frame (testing/replay)")
    s.add_argument("--static-dir", default=None, help="UI bundle directory")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("report", help="aggregate metrics over simulation logs")
    s.add_argument("logs", nargs="*")
    s.add_argument("--out", default=None)
    s.add_argument("--assert-no-breach", action="store_true")
    s.add_argument("--assert-intervention-p95", type=float, default=None)
    s.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(str(e), file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
