"""Command-line interface: generate scenarios, run policies, simulate online
operation, and sweep parameters into aggregate CSVs.

Exit codes: 0 success, 2 bad arguments (argparse), 3 solver non-convergence
(result files are still written from the partial result when available),
4 unreadable scenario file.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import scenario as scenario_io
from .baselines import lower_bound, solve_ss
from .errors import NonConvergence, SchemaError
from .jsseh import solve_jsseh
from .model import RunResult, Scenario
from .online import OnlineConfig, run_online
from .options import SolverOptions
from .sseh import solve_sseh

__all__ = ["main"]

OFFLINE_POLICIES = ("ss", "ss-eh", "jss-eh", "lb")
ONLINE_POLICIES = ("ss-eh", "jss-eh")


def _window_type(text: str):
    if text == "full":
        return None
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"window must be an integer or 'full', got {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"window must be >= 1, got {value}")
    return value


def _load_scenario_or_exit(path: str) -> Scenario:
    try:
        return scenario_io.load(path)
    except (OSError, SchemaError, ValueError) as exc:
        print(f"error: cannot read scenario {path!r}: {exc}", file=sys.stderr)
        raise SystemExit(4)


def _solve_offline(sc: Scenario, policy: str, init: str, opts: SolverOptions) -> RunResult:
    if policy == "lb":
        return lower_bound(sc, opts)
    if policy == "ss":
        return solve_ss(sc, opts)
    if policy == "ss-eh":
        return solve_sseh(sc, opts)
    return solve_jsseh(sc, init=init, opts=opts)


def _write_summary(path: str, policy: str, res: RunResult) -> None:
    doc = {
        "policy": policy,
        "totalDistortion": res.total_distortion,
        "perSlotDistortion": [float(v) for v in res.per_slot_distortion],
        "residuals": {"kkt": res.residuals.kkt, "feasibility": res.residuals.feasibility},
        "iterations": res.iterations,
        "wallTime": res.wall_time,
        "converged": res.converged,
    }
    if res.pre_crop_objective is not None:
        doc["preCropObjective"] = res.pre_crop_objective
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _write_allocation(path: str, res: RunResult) -> None:
    Z = res.allocation.selection
    P = res.allocation.power
    S = res.allocation.share
    M, T = Z.shape
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "sensor", "z", "p", "s", "D_slot"])
        for t in range(T):
            d = repr(float(res.per_slot_distortion[t]))
            for i in range(M):
                writer.writerow([t + 1, i + 1, repr(float(Z[i, t])),
                                 repr(float(P[i, t])), repr(float(S[i, t])), d])


def _write_trace(path: str, res: RunResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "objective", "constraint_residual"])
        if res.iterates is not None:
            for row in np.atleast_2d(res.iterates):
                if row.size == 0:
                    continue
                writer.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2]))])


def _write_events(path: str, sc: Scenario, res: RunResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "arrival_sensors", "horizon"])
        for ev in res.events or []:
            t0 = ev["slot"] - 1
            arrivals = ";".join(str(i + 1) for i in np.flatnonzero(sc.E[:, t0] > 0))
            writer.writerow([ev["slot"], arrivals, ev["horizon"]])


def _emit_result(args, sc: Scenario, policy: str, res: RunResult, events: bool = False) -> None:
    prefix = args.out_prefix
    _write_summary(prefix + "_summary.json", policy, res)
    _write_allocation(prefix + "_alloc.csv", res)
    if getattr(args, "trace", False):
        _write_trace(prefix + "_trace.csv", res)
    if events:
        _write_events(prefix + "_events.csv", sc, res)
    print(f"policy={policy} total_distortion={res.total_distortion!r} "
          f"converged={res.converged} iterations={res.iterations} "
          f"wall_time={res.wall_time:.3f}s")


def cmd_generate(args) -> int:
    sc = scenario_io.generate(args.M, args.T, args.K, args.m, mu=args.mu,
                              Eamp=args.Eamp, Ts=args.Ts, sigma_w2=args.sigma_w2,
                              seed=args.seed)
    scenario_io.save(sc, args.out)
    print(args.out)
    return 0


def cmd_solve(args) -> int:
    sc = _load_scenario_or_exit(args.scenario)
    opts = SolverOptions().updated(tol=args.tol, seed=args.seed)
    code = 0
    try:
        res = _solve_offline(sc, args.policy, args.init, opts)
    except NonConvergence as exc:
        code = 3
        print(f"warning: {exc}", file=sys.stderr)
        res = exc.result
        if res is None or res.allocation.selection.shape != (sc.M, sc.T):
            return code
    _emit_result(args, sc, args.policy, res)
    return code


def cmd_online(args) -> int:
    sc = _load_scenario_or_exit(args.scenario)
    opts = SolverOptions().updated(tol=args.tol, seed=args.seed)
    config = OnlineConfig(policy=args.policy, window=args.window, init=args.init)
    code = 0
    try:
        res = run_online(sc, config, opts)
    except NonConvergence as exc:
        code = 3
        print(f"warning: {exc}", file=sys.stderr)
        res = exc.result
        if res is None or res.allocation.selection.shape != (sc.M, sc.T):
            return code
    _emit_result(args, sc, args.policy, res, events=True)
    return code


def cmd_sweep(args) -> int:
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not policies or not values:
        print("error: --policies and --values must be non-empty", file=sys.stderr)
        return 2
    for p in policies:
        allowed = ONLINE_POLICIES if args.param == "Tw" else OFFLINE_POLICIES
        if p not in allowed:
            print(f"error: policy {p!r} not valid for a {args.param} sweep", file=sys.stderr)
            return 2
    try:
        typed = [float(v) if args.param == "mu" else int(v) for v in values]
    except ValueError as exc:
        print(f"error: bad --values: {exc}", file=sys.stderr)
        return 2

    rows = []
    for policy in policies:
        for value in typed:
            totals = []
            for rep in range(args.repeats):
                seed = args.seed + rep
                K = value if args.param == "K" else args.K
                mu = value if args.param == "mu" else args.mu
                sc = scenario_io.generate(args.M, args.T, K, args.m, mu=mu,
                                          Eamp=args.Eamp, Ts=args.Ts,
                                          sigma_w2=args.sigma_w2, seed=seed)
                opts = SolverOptions().updated(tol=args.tol, seed=seed)
                if args.param == "Tw":
                    res = run_online(sc, OnlineConfig(policy=policy, window=value), opts)
                else:
                    res = _solve_offline(sc, policy, args.init, opts)
                totals.append((seed, res.total_distortion))
            vals = np.array([t for _, t in totals])
            mean = float(np.mean(vals))
            stderr = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
            for seed, total in totals:
                rows.append([policy, args.param, value, seed, total, mean, stderr])

    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "param", "value", "seed", "total_distortion",
                         "mean", "stderr"])
        for row in rows:
            writer.writerow([row[0], row[1], row[2], row[3], repr(float(row[4])),
                             repr(row[5]), repr(row[6])])
    print(args.out)
    return 0


def _add_scenario_params(p: argparse.ArgumentParser, require_mtk: bool) -> None:
    p.add_argument("--M", type=int, required=require_mtk)
    p.add_argument("--T", type=int, required=require_mtk)
    p.add_argument("--K", type=int, required=require_mtk)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--Eamp", type=float, default=1.0)
    p.add_argument("--sigma-w2", dest="sigma_w2", type=float, default=1.0)
    p.add_argument("--Ts", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ehsensel",
        description="Sensor selection and power allocation for energy-harvesting networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw and save a random scenario")
    _add_scenario_params(g, require_mtk=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run an offline policy on a scenario file")
    s.add_argument("--scenario", required=True)
    s.add_argument("--policy", choices=OFFLINE_POLICIES, default="ss-eh")
    s.add_argument("--init", choices=("sseh", "zero", "random"), default="sseh")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--trace", action="store_true", help="also write the iterate trace CSV")
    s.add_argument("--out-prefix", required=True)
    s.set_defaults(func=cmd_solve)

    o = sub.add_parser("online", help="simulate event-driven online operation")
    o.add_argument("--scenario", required=True)
    o.add_argument("--policy", choices=ONLINE_POLICIES, default="ss-eh")
    o.add_argument("--init", choices=("sseh", "zero", "random"), default="sseh")
    o.add_argument("--window", type=_window_type, default=None,
                   help="planning window in slots, or 'full'")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--tol", type=float, default=1e-6)
    o.add_argument("--trace", action="store_true")
    o.add_argument("--out-prefix", required=True)
    o.set_defaults(func=cmd_online)

    w = sub.add_parser("sweep", help="seeded replicates over a parameter grid")
    _add_scenario_params(w, require_mtk=True)
    w.add_argument("--param", choices=("K", "mu", "Tw"), required=True)
    w.add_argument("--values", required=True, help="comma-separated parameter values")
    w.add_argument("--repeats", type=int, default=1)
    w.add_argument("--policies", default="ss-eh")
    w.add_argument("--init", choices=("sseh", "zero", "random"), default="sseh")
    w.add_argument("--tol", type=float, default=1e-6)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)
