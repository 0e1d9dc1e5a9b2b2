"""Command-line driver.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 a run invariant
or certified bound failed, 4 unreadable trace or formula input.
"""
from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, graph_from_dict, load_config, load_scenario
from .consensus import build_expected_mixing, optimize_weights
from .core import is_connected, metropolis_weights
from .io import (TraceFormatError, read_consensus, read_events, write_bundle, write_json_atomic,
                 write_monitor)
from .sim import SimulationError, run_replicas, run_scenario
from .stl import FormulaError, MomentTrace, evaluate_trace, parse_formula_file

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_INPUT = 0, 2, 3, 4

log = logging.getLogger("swarmmon")


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _manifest(args, out: Path, files, started: float, **extra) -> dict:
    doc = {
        "config": str(args.config) if getattr(args, "config", None) else None,
        "seed": getattr(args, "seed", None),
        "out_dir": str(out),
        "version": version_string(),
        "duration_s": time.perf_counter() - started,
        "files": sorted(files),
    }
    doc.update(extra)
    return doc


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    sc = load_scenario(args.config, seed=args.seed)
    if args.no_kf:
        sc.use_kf = False
    out = Path(args.out)
    bundle = run_scenario(sc)
    files = write_bundle(bundle, out)
    write_json_atomic(out / "manifest.json",
                      _manifest(args, out, files, started, seed=sc.seed, use_kf=sc.use_kf,
                                lambda2=bundle.lambda2, horizon=sc.horizon))
    log.info("wrote %s to %s", ", ".join(files), out)
    return EXIT_OK


def cmd_monitor(args) -> int:
    started = time.perf_counter()
    trace_dir = Path(args.trace)
    trace = read_consensus(trace_dir / "consensus.csv")
    events = read_events(trace_dir / "events.csv", trace.T)
    if events:
        trace = MomentTrace(trace.moment_names, trace.zeta, trace.rho, trace.eta, events)
    try:
        text = Path(args.formula).read_text()
    except OSError as exc:
        raise TraceFormatError(f"cannot read formula file: {exc}") from None
    f = parse_formula_file(text, trace.moment_names)
    result = evaluate_trace(trace, f, since_closed=not args.since_open)
    out = Path(args.out) if args.out else trace_dir
    out.mkdir(parents=True, exist_ok=True)
    write_monitor(out / "monitor.csv", result)
    if args.out:
        write_json_atomic(out / "manifest.json",
                          _manifest(args, out, ["monitor.csv"], started, trace=str(trace_dir),
                                    formula=str(f)))
    return EXIT_OK


def cmd_bench_bounds(args) -> int:
    started = time.perf_counter()
    if args.replicas < 1:
        raise ConfigError("--replicas", "must be at least 1")
    sc = load_scenario(args.config, seed=args.seed)
    if args.u_max_scale is not None:
        sc.u_max *= args.u_max_scale
    seeds = range(sc.seed, sc.seed + args.replicas)
    W = sc.gossip_weights()
    kf = run_replicas(sc, seeds, use_kf=True, log_every=args.log_every, W=W)
    raw = run_replicas(sc, seeds, use_kf=False, log_every=args.log_every, W=W)
    names = sc.moment_names
    err = kf.mean_err_inf
    rho_max = kf.rho.max(axis=1)
    per_moment_ok = np.all(err <= kf.rho, axis=1)
    es_ok = kf.mean_e_s <= rho_max
    holds = per_moment_ok & es_ok
    cols = {"k": kf.ks, "e_s_kf": kf.mean_e_s, "e_s_raw": raw.mean_e_s}
    for i, n in enumerate(names):
        cols[f"err_{n}"] = err[:, i]
    for i, n in enumerate(names):
        cols[f"rho_{n}"] = kf.rho[:, i]
    cols["rho_max"] = rho_max
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [",".join(list(cols) + ["bound_holds"])]
    for r in range(len(kf.ks)):
        vals = [str(int(kf.ks[r]))] + ["%.17g" % cols[c][r] for c in list(cols)[1:]]
        lines.append(",".join(vals + [str(int(holds[r]))]))
    (out / "bench.csv").write_text("\n".join(lines) + "\n")
    summary = {
        "replicas": args.replicas,
        "lambda2": kf.lambda2,
        "bound_holds": bool(holds.all()),
        "first_violation_k": None if holds.all() else int(kf.ks[~holds][0]),
        "last_quartile_e_s_kf": float(kf.mean_e_s[kf.ks >= 0.75 * sc.horizon].mean()),
        "last_quartile_e_s_raw": float(raw.mean_e_s[raw.ks >= 0.75 * sc.horizon].mean()),
    }
    write_json_atomic(out / "manifest.json",
                      _manifest(args, out, ["bench.csv"], started, summary=summary))
    print(json.dumps(summary, indent=2))
    return EXIT_OK if summary["bound_holds"] else EXIT_INVARIANT


def cmd_optimize_weights(args) -> int:
    doc = load_config(args.graph)
    g = graph_from_dict(doc.get("graph", doc))
    if not is_connected(g):
        raise ConfigError("graph", "communication graph is not connected")
    res = optimize_weights(g, iters=args.iters)
    report = {
        "n": g.n,
        "lambda2": res.spectrum.lambda2,
        "lambda2_metropolis": build_expected_mixing(metropolis_weights(g)).lambda2,
        "w": res.W.tolist(),
        "iterations": len(res.history),
        "history": res.history,
    }
    text = json.dumps(report, indent=2)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "weights.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--config", help="scenario JSON file")
    common.add_argument("--replicas", type=int, default=1)
    common.add_argument("--no-kf", action="store_true", help="gossip on raw measurements")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="swarmmon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run one scenario and write its trace")
    s.set_defaults(func=cmd_simulate, needs=("config", "out"))

    m = sub.add_parser("monitor", parents=[common], help="evaluate a formula on a trace directory")
    m.add_argument("--trace", required=True)
    m.add_argument("--formula", required=True)
    m.add_argument("--since-open", action="store_true",
                   help="sum left-operand doubt over (k', k] instead of [k', k]")
    m.set_defaults(func=cmd_monitor, needs=())

    b = sub.add_parser("bench-bounds", parents=[common], help="Monte Carlo check of the error bound")
    b.add_argument("--log-every", type=int, default=10)
    b.add_argument("--u-max-scale", type=float)
    b.set_defaults(func=cmd_bench_bounds, needs=("config", "out"))

    o = sub.add_parser("optimize-weights", parents=[common], help="minimize lambda2 of the mixing matrix")
    o.add_argument("--graph", required=True, help="JSON graph description or scenario file")
    o.add_argument("--iters", type=int, default=500)
    o.set_defaults(func=cmd_optimize_weights, needs=())
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    for name in args.needs:
        if getattr(args, name) is None:
            print(f"error: --{name} is required for {args.command}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (TraceFormatError, FormulaError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
