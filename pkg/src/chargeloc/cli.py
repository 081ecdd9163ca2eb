"""Command-line entry point: ``chargeloc <command> [options]``."""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import calibration, simqueue, synth
from .bilevel import LocationError, load_scenario, run_scenario
from .equilibrium import (EquilibriumError, optimality_gap, solve_llp_lin, solve_mnl_fixed_point,
                          solve_wardrop_fw, solution_to_json, true_throughput)
from .instance import InstanceError, load_instance
from .queueing import QueueError, QueueSpec, queue_metrics, two_moment_capacity
from .solver import BackendError
from .solver.model import TIMEOUT_NO_SOLUTION

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_TIMEOUT = 0, 2, 3, 4
METHODS = ("lp", "fixed-point", "frank-wolfe")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Run:
    """Collects outputs of one command and writes its manifest sidecar."""

    def __init__(self, args: argparse.Namespace, inputs: dict[str, str | None]):
        self.args = args
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs = {k: v for k, v in inputs.items() if v}
        self.outputs: list[str] = []
        self.start = time.perf_counter()

    def write(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        path.write_text(text)
        self.outputs.append(name)
        return path

    def finish(self, extra: dict | None = None) -> None:
        config = {k: v for k, v in vars(self.args).items() if k not in ("func", "argv")}
        manifest = {
            "command": self.args.command,
            "argv": self.args.argv,
            "config": config,
            "inputs": {k: {"path": str(v), "sha256": _sha256(v)} for k, v in self.inputs.items()},
            "seed": self.args.seed,
            "version": _version(),
            "elapsed_s": time.perf_counter() - self.start,
            "outputs": self.outputs,
        }
        if extra:
            manifest.update(extra)
        (self.out_dir / f"{self.args.command}.manifest.json").write_text(
            json.dumps(manifest, indent=1, sort_keys=True, default=str) + "\n")


def _parse_sweep(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise InstanceError(f"--rho-sweep expects start:stop:count, got {text!r}") from None
    if n < 1 or hi < lo or lo < 0:
        raise InstanceError("--rho-sweep needs 0 <= start <= stop and count >= 1")
    return np.linspace(lo, hi, n)


def cmd_queue_metrics(args) -> int:
    run = Run(args, {})
    if args.rho_sweep:
        rhos = _parse_sweep(args.rho_sweep)
        families = simqueue.comparison_families(args.buffer, args.total_rate, args.s or 2, args.r or 2)
        sim = None if args.simulate else set()
        rows = simqueue.sweep(families, rhos, simulate_labels=sim, horizon=args.horizon,
                              replications=args.replications, seed=args.seed, workers=args.threads)
        path = run.write("queue_sweep.csv", simqueue.rows_to_csv(rows))
        print(f"wrote {len(rows)} rows for {len(families)} queues to {path}")
        run.finish()
        return EXIT_OK
    if args.lam is None:
        raise InstanceError("give --lambda or --rho-sweep")
    s = args.s or 1
    spec = QueueSpec(s, args.K or s, args.mu, args.r or 1)
    lams = [args.lam]
    header = "s,K,mu,r,lambda,K_eff,p_balk,w_avg,L"
    lines = [header]
    for lam in lams:
        m = queue_metrics(spec, lam)
        k_eff = two_moment_capacity(spec, lam)
        lines.append(",".join(str(v) for v in (spec.servers, spec.capacity, spec.service_rate, spec.erlang_shape,
                                                lam, repr(k_eff), repr(m.balk_prob), repr(m.avg_wait),
                                                repr(m.avg_in_system))))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    run.write("queue_metrics.csv", text)
    run.finish()
    return EXIT_OK


def _read_x_file(path: str) -> list[str]:
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict):
        doc = doc.get("x", doc.get("open"))
    if not isinstance(doc, list):
        raise InstanceError("x file must be a JSON list of candidate ids or an object with key 'x'", "/x")
    return [str(v) for v in doc]


def cmd_solve_ue(args) -> int:
    instance = load_instance(args.instance, args.n_points)
    run = Run(args, {"instance": args.instance, "x_file": args.x_file})
    open_set = None if args.open_all or not args.x_file else instance.open_mask(_read_x_file(args.x_file))
    methods = [m for part in args.method for m in part.split(",")]
    for m in methods:
        if m not in METHODS:
            raise InstanceError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    if "fixed-point" in methods and instance.disutility.theta_inv <= 0:
        raise InstanceError("method fixed-point needs theta_inv > 0 (logit noise)", "/disutility/theta_inv")
    objectives = {}
    for m in methods:
        if m == "lp":
            sol = solve_llp_lin(instance, open_set, backend=args.backend)
        elif m == "fixed-point":
            sol = solve_mnl_fixed_point(instance, open_set)
        else:
            sol = solve_wardrop_fw(instance, open_set)
        rep = true_throughput(sol, instance)
        objectives[m] = sol.objective
        run.write(f"solution_{m}.json", json.dumps(solution_to_json(sol, instance), indent=1) + "\n")
        print(f"method={m} objective={sol.objective:.10g} TTR={rep.ttr:.10g} ATR={rep.atr:.10g}")
    if "lp" in objectives and len(objectives) > 1:
        for m, obj in objectives.items():
            if m != "lp":
                print(f"gap lp vs {m} = {optimality_gap(objectives['lp'], obj):.6g}")
    run.finish({"objectives": objectives})
    return EXIT_OK


def cmd_solve_flp(args) -> int:
    scenario = load_scenario(args.scenario)
    overrides = {}
    if args.model:
        overrides["model"] = args.model
    if args.backend:
        overrides["backend"] = args.backend
    if args.time_limit is not None:
        overrides["time_limit"] = args.time_limit
    if overrides:
        from dataclasses import replace
        scenario = replace(scenario, **overrides)
    inst_path = args.instance or scenario.instance_path
    if inst_path is None:
        raise InstanceError("no instance given (flag or scenario field)", "/instance")
    if args.instance is None:
        base = Path(args.scenario).parent
        inst_path = str(Path(inst_path) if Path(inst_path).is_absolute() else base / inst_path)
    instance = load_instance(inst_path, args.n_points)
    run = Run(args, {"instance": inst_path, "scenario": args.scenario})
    sol = run_scenario(scenario, instance)
    run.write("location.json", json.dumps(sol.to_json(), indent=1) + "\n")
    rows = ["station_id,owner,open,lambda,throughput"]
    for j, st in enumerate(instance.stations):
        rows.append(f"{st.id},{st.owner},{int(sol.open_mask[j])},{sol.equilibrium.lam[j]!r},"
                    f"{sol.meta['per_station'][j]!r}")
    run.write("throughput.csv", "\n".join(rows) + "\n")
    gap = "n/a" if sol.milp_gap is None else f"{sol.milp_gap:.3g}"
    print(f"model={sol.model} x={','.join(sol.x) or '-'} TTR={sol.ttr:.10g} ATR={sol.atr:.10g} "
          f"gap={gap} status={sol.status}")
    run.finish({"status": sol.status})
    return EXIT_OK


def cmd_calibrate(args) -> int:
    instance = load_instance(args.instance, args.n_points)
    sessions = calibration.load_sessions(args.sessions)
    grid = calibration.GridSpec.parse(args.grid)
    run = Run(args, {"instance": args.instance, "sessions": args.sessions,
                     "grid": args.grid if Path(args.grid).is_file() else None})
    result = calibration.grid_search(instance, sessions, grid, workers=args.threads, backend=args.backend)
    run.write("calibration.csv", result.report_csv())
    for cell in result.failures:
        print(f"cell {cell.triplet} failed: {cell.error}", file=sys.stderr)
    best = result.best
    print(f"best alpha={best.triplet[0]:g} beta={best.triplet[1]:g} theta_inv={best.triplet[2]:g} kl={best.kl:.6g}")
    run.finish({"failures": len(result.failures)})
    return EXIT_OK


def cmd_synth_city(args) -> int:
    run = Run(args, {})
    doc = synth.synth_city(args.demands, args.stations, args.seed, args.competitors, args.candidates,
                           args.buffer, args.size_km, args.n_points or 100)
    path = run.write(args.name, synth.dumps(doc))
    print(f"wrote {path}")
    run.finish()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default="out", help="directory for outputs and manifests")
    common.add_argument("--config", help="JSON file whose keys mirror the long flags")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker pool size")
    common.add_argument("--seed", type=int, default=0)

    parser = argparse.ArgumentParser(prog="chargeloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("queue-metrics", parents=[common], help="analytic queue metrics or a rho sweep")
    p.add_argument("--s", type=int, help="servers (1; the sweep compares 2)")
    p.add_argument("--K", type=int, help="capacity (defaults to --s)")
    p.add_argument("--mu", type=float, default=40.0)
    p.add_argument("--r", type=int, help="Erlang shape (1; the sweep uses 2)")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--rho-sweep", help="start:stop:count utilisation grid for the four-queue comparison")
    p.add_argument("--buffer", type=int, default=0)
    p.add_argument("--total-rate", type=float, default=40.0)
    p.add_argument("--simulate", action=argparse.BooleanOptionalAction, default=True,
                   help="simulate the Erlang queue in sweeps")
    p.add_argument("--horizon", type=float, default=200.0)
    p.add_argument("--replications", type=int, default=30)
    p.set_defaults(func=cmd_queue_metrics)

    p = sub.add_parser("solve-ue", parents=[common], help="solve the lower-level equilibrium")
    p.add_argument("--instance", required=True)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--open-all", action="store_true")
    grp.add_argument("--x-file")
    p.add_argument("--method", action="append", default=None, help="lp, fixed-point or frank-wolfe; repeatable")
    p.add_argument("--n-points", type=int)
    p.add_argument("--backend", default="highs")
    p.set_defaults(func=cmd_solve_ue)

    p = sub.add_parser("solve-flp", parents=[common], help="solve the location problem")
    p.add_argument("--instance")
    p.add_argument("--scenario", required=True)
    p.add_argument("--model", choices=["linearization", "heuristic"])
    p.add_argument("--backend")
    p.add_argument("--time-limit", type=float)
    p.add_argument("--n-points", type=int)
    p.set_defaults(func=cmd_solve_flp)

    p = sub.add_parser("calibrate", parents=[common], help="grid-search calibration")
    p.add_argument("--instance", required=True)
    p.add_argument("--sessions", required=True)
    p.add_argument("--grid", default="standard",
                   help="'standard' (alpha, beta 0..50 by 10; theta_inv 0..5), a JSON file or alpha=..;beta=..;theta_inv=..")
    p.add_argument("--n-points", type=int)
    p.add_argument("--backend", default="highs")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synth-city", parents=[common], help="write a synthetic instance")
    p.add_argument("--demands", type=int, required=True)
    p.add_argument("--stations", type=int, required=True)
    p.add_argument("--competitors", type=int, default=0)
    p.add_argument("--candidates", type=int, default=0)
    p.add_argument("--buffer", type=int, default=0)
    p.add_argument("--size-km", type=float, default=20.0)
    p.add_argument("--n-points", type=int)
    p.add_argument("--name", default="instance.json")
    p.set_defaults(func=cmd_synth_city)
    return parser


def _config_path(argv: list[str]) -> str | None:
    path = None
    for k, tok in enumerate(argv):
        if tok == "--config" and k + 1 < len(argv):
            path = argv[k + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    return path


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    path = _config_path(argv)
    choices = parser._subparsers._group_actions[0].choices
    command = argv[0] if argv and argv[0] in choices else None
    if path is None or command is None:
        return parser.parse_args(argv)
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read --config: {exc}")
    if not isinstance(config, dict):
        parser.error("--config must hold a JSON object")
    sub = choices[command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in config.items():
        dest = key.lstrip("-").replace("-", "_")
        dest = "lam" if dest == "lambda" else dest
        if dest not in actions:
            parser.error(f"unknown config key {key!r} for {command}")
        defaults[dest] = value
        actions[dest].required = False
    # flags on the command line still win over the file
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = _apply_config(parser, argv)
    args.argv = argv
    if getattr(args, "method", "unset") is None:
        args.method = ["lp"]
    try:
        return args.func(args)
    except (InstanceError, QueueError, calibration.CalibrationError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except LocationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT if exc.status == TIMEOUT_NO_SOLUTION else EXIT_SOLVER
    except (EquilibriumError, BackendError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
