"""Pluggable LP/MILP engines behind one ``solve`` call.

``highs``  in-process HiGHS through scipy; LP duals, no SOS2/indicators.
``cbc``    external CBC executable fed a fixed-format MPS file; native SOS2.
``scip``   SCIP (pyscipopt) reading the LP-format file; native SOS2 and
           indicator constraints.

The CBC executable is looked up in ``$CHARGELOC_CBC``, then on ``PATH``, then
in the binary bundled with PuLP when that package is installed.
"""
from __future__ import annotations

import importlib.util
import os
import platform
import re
import shutil
import subprocess
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy import optimize

from .model import (
    ERROR,
    FEASIBLE_TIMEOUT,
    INFEASIBLE,
    OPTIMAL,
    TIMEOUT_NO_SOLUTION,
    UNBOUNDED,
    BackendCapability,
    MilpModel,
    ModelError,
    SolveReport,
    SolverOptions,
    relative_gap,
)
from .writers import write_lp, write_mps

CBC_ENV = "CHARGELOC_CBC"


class BackendError(RuntimeError):
    """The engine is missing or failed; ``str(exc)`` carries its own output."""


class Backend:
    capability: BackendCapability

    def available(self) -> bool:
        return True

    def solve(self, model: MilpModel, options: SolverOptions | None = None) -> SolveReport:
        raise NotImplementedError

    def _check_constructs(self, model: MilpModel) -> None:
        cap = self.capability
        if model.sos2 and not cap.supports_sos2:
            raise ModelError(f"backend {cap.id} has no native SOS2; build the model with binary SOS2 encoding")
        if model.indicators and not cap.supports_indicator:
            raise ModelError(f"backend {cap.id} has no indicator constraints; use the big-M encoding")


def _split_rows(model: MilpModel):
    A = model.A.tocsr()
    sense = model.row_sense
    ub_rows = np.flatnonzero(sense != "=")
    eq_rows = np.flatnonzero(sense == "=")
    flip = np.where(sense[ub_rows] == ">", -1.0, 1.0)
    A_ub = A[ub_rows].multiply(flip[:, None]).tocsr() if ub_rows.size else None
    b_ub = model.rhs[ub_rows] * flip if ub_rows.size else None
    A_eq = A[eq_rows] if eq_rows.size else None
    b_eq = model.rhs[eq_rows] if eq_rows.size else None
    return ub_rows, flip, A_ub, b_ub, eq_rows, A_eq, b_eq


class HighsBackend(Backend):
    capability = BackendCapability("highs", supports_indicator=False, supports_sos2=False, supports_duals_lp=True)

    def solve(self, model: MilpModel, options: SolverOptions | None = None) -> SolveReport:
        options = options or SolverOptions()
        model.validate()
        self._check_constructs(model)
        sign = -1.0 if model.sense == "max" else 1.0
        c = sign * model.obj
        start = time.perf_counter()
        if not model.is_mip:
            return self._solve_lp(model, c, sign, options, start)
        return self._solve_mip(model, c, sign, options, start)

    def _solve_lp(self, model, c, sign, options, start) -> SolveReport:
        ub_rows, flip, A_ub, b_ub, eq_rows, A_eq, b_eq = _split_rows(model)
        bounds = np.column_stack([model.lb, model.ub])
        bounds = [(None if lo == -np.inf else lo, None if hi == np.inf else hi) for lo, hi in bounds]
        res = optimize.linprog(
            c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs",
            options={"time_limit": options.time_limit, "primal_feasibility_tolerance": options.feasibility_tol,
                     "dual_feasibility_tolerance": options.feasibility_tol},
        )
        wall = time.perf_counter() - start
        if res.status == 0:
            duals = np.zeros(model.num_rows)
            if ub_rows.size:
                duals[ub_rows] = res.ineqlin.marginals * flip
            if eq_rows.size:
                duals[eq_rows] = res.eqlin.marginals
            obj = sign * res.fun + model.obj_const
            return SolveReport(OPTIMAL, obj, np.asarray(res.x), sign * duals, obj, 0.0, wall, "highs", res.message)
        status = {2: INFEASIBLE, 3: UNBOUNDED, 1: TIMEOUT_NO_SOLUTION}.get(res.status, ERROR)
        return SolveReport(status, wall_time=wall, backend="highs", message=res.message)

    def _solve_mip(self, model, c, sign, options, start) -> SolveReport:
        integrality = (model.vtype != "C").astype(int)
        lb = np.where(model.vtype == "B", np.maximum(model.lb, 0.0), model.lb)
        ub = np.where(model.vtype == "B", np.minimum(model.ub, 1.0), model.ub)
        lo = np.where(model.row_sense == "<", -np.inf, model.rhs)
        hi = np.where(model.row_sense == ">", np.inf, model.rhs)
        cons = [optimize.LinearConstraint(model.A, lo, hi)] if model.num_rows else []
        res = optimize.milp(
            c, integrality=integrality, bounds=optimize.Bounds(lb, ub), constraints=cons,
            options={"time_limit": options.time_limit, "mip_rel_gap": options.mip_gap, "disp": False},
        )
        wall = time.perf_counter() - start
        if res.x is not None and res.status in (0, 1):
            obj = sign * res.fun + model.obj_const
            bound = getattr(res, "mip_dual_bound", None)
            bound = None if bound is None else sign * bound + model.obj_const
            status = OPTIMAL if res.status == 0 else FEASIBLE_TIMEOUT
            gap = relative_gap(obj, bound, model.sense)
            return SolveReport(status, obj, np.asarray(res.x), None, bound, gap, wall, "highs", res.message)
        status = {2: INFEASIBLE, 3: UNBOUNDED, 1: TIMEOUT_NO_SOLUTION}.get(res.status, ERROR)
        return SolveReport(status, wall_time=wall, backend="highs", message=res.message)


def find_cbc() -> str | None:
    env = os.environ.get(CBC_ENV)
    if env:
        return env
    found = shutil.which("cbc")
    if found:
        return found
    spec = importlib.util.find_spec("pulp")
    if spec is None or not spec.submodule_search_locations:
        return None
    root = Path(list(spec.submodule_search_locations)[0]) / "solverdir" / "cbc"
    arch = {"x86_64": "i64", "aarch64": "arm64", "arm64": "arm64"}.get(platform.machine(), "i64")
    system = {"Linux": "linux", "Darwin": "osx", "Windows": "win"}.get(platform.system(), "linux")
    candidate = root / system / arch / ("cbc.exe" if system == "win" else "cbc")
    return str(candidate) if candidate.exists() else None


_CBC_FLOAT = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"


class CbcBackend(Backend):
    capability = BackendCapability("cbc", supports_indicator=False, supports_sos2=True, supports_duals_lp=True)

    def __init__(self, executable: str | None = None):
        self.executable = executable or find_cbc()

    def available(self) -> bool:
        return bool(self.executable) and Path(self.executable).exists()

    def solve(self, model: MilpModel, options: SolverOptions | None = None) -> SolveReport:
        options = options or SolverOptions()
        if not self.available():
            raise BackendError(f"CBC executable not found; set ${CBC_ENV} or install cbc/pulp")
        self._check_constructs(model)
        data = write_mps(model)
        sign = -1.0 if model.sense == "max" else 1.0
        with tempfile.TemporaryDirectory(prefix="chargeloc-cbc-") as tmp:
            mps = Path(tmp) / "model.mps"
            sol = Path(tmp) / "model.sol"
            mps.write_bytes(data)
            cmd = [self.executable, str(mps), "sec", repr(float(options.time_limit)),
                   "ratio", repr(float(options.mip_gap)), "primalT", repr(float(options.feasibility_tol))]
            if options.threads:
                cmd += ["threads", str(int(options.threads))]
            tail = ["printingOptions", "all", "solve", "solution", str(sol)]
            start = time.perf_counter()
            proc = subprocess.run(cmd + tail, capture_output=True, text=True)
            note = ""
            if proc.returncode < 0 and model.sos2:
                # some CBC builds crash in cut generation on SOS sets
                note = f"cbc crashed (signal {-proc.returncode}); retried with cuts off. "
                proc = subprocess.run(cmd + ["cuts", "off"] + tail, capture_output=True, text=True)
            wall = time.perf_counter() - start
            log = proc.stdout + proc.stderr
            if proc.returncode != 0 or not sol.exists():
                raise BackendError(log.strip() or f"cbc exited with code {proc.returncode}")
            text = sol.read_text()
        report = self._parse(model, text, log, sign, wall)
        report.message = note + report.message
        return report

    def _parse(self, model: MilpModel, text: str, log: str, sign: float, wall: float) -> SolveReport:
        lines = text.splitlines()
        head = lines[0] if lines else ""
        low = head.lower()
        if "infeasible" in low and "integer" not in low and not low.startswith("stopped"):
            return SolveReport(INFEASIBLE, wall_time=wall, backend="cbc", message=head)
        if "integer infeasible" in low:
            return SolveReport(INFEASIBLE, wall_time=wall, backend="cbc", message=head)
        if "unbounded" in low:
            return SolveReport(UNBOUNDED, wall_time=wall, backend="cbc", message=head)
        if low.startswith("optimal"):
            status = OPTIMAL
        elif low.startswith("stopped"):
            status = FEASIBLE_TIMEOUT
            if "no integer solution" in low or len(lines) <= 1:
                return SolveReport(TIMEOUT_NO_SOLUTION, wall_time=wall, backend="cbc", message=head)
        else:
            return SolveReport(ERROR, wall_time=wall, backend="cbc", message=head + "\n" + log)

        m, n = model.num_rows, model.num_vars
        body = [ln for ln in lines[1:] if ln.strip()]
        if len(body) != m + n:
            raise BackendError(f"cbc solution has {len(body)} entries, expected {m + n}:\n{text}")
        parse = []
        for ln in body:
            parts = ln.replace("**", " ").split()
            parse.append((float(parts[2]), float(parts[3])))
        arr = np.asarray(parse)
        duals = sign * arr[:m, 1]
        values = arr[m:, 0]
        obj = model.objective_value(values)
        bound = None
        match = re.search(r"best possible\s*" + _CBC_FLOAT, log, re.IGNORECASE)
        if match is None:
            match = re.search(r"Lower bound:\s*" + _CBC_FLOAT, log)
        if status == OPTIMAL:
            bound = obj
        elif match:
            bound = sign * float(match.group(1)) + model.obj_const
        gap = relative_gap(obj, bound, model.sense)
        return SolveReport(status, obj, values, None if model.is_mip else duals, bound, gap, wall, "cbc", head)


class ScipBackend(Backend):
    capability = BackendCapability("scip", supports_indicator=True, supports_sos2=True, supports_duals_lp=False)

    def available(self) -> bool:
        return importlib.util.find_spec("pyscipopt") is not None

    def solve(self, model: MilpModel, options: SolverOptions | None = None) -> SolveReport:
        options = options or SolverOptions()
        if not self.available():
            raise BackendError("pyscipopt is not installed")
        import pyscipopt

        data = write_lp(model)
        with tempfile.TemporaryDirectory(prefix="chargeloc-scip-") as tmp:
            path = Path(tmp) / "model.lp"
            path.write_bytes(data)
            scip = pyscipopt.Model()
            scip.hideOutput()
            try:
                scip.readProblem(str(path))
            except Exception as exc:  # surfaced verbatim
                raise BackendError(f"SCIP failed to read the model: {exc}") from exc
        scip.setParam("limits/time", float(options.time_limit))
        scip.setParam("limits/gap", float(options.mip_gap))
        scip.setParam("numerics/feastol", float(options.feasibility_tol))
        if options.threads:
            scip.setParam("parallel/maxnthreads", int(options.threads))
        start = time.perf_counter()
        scip.optimize()
        wall = time.perf_counter() - start
        raw = scip.getStatus()
        if raw == "infeasible":
            return SolveReport(INFEASIBLE, wall_time=wall, backend="scip", message=raw)
        if raw in ("unbounded", "inforunbd"):
            return SolveReport(UNBOUNDED, wall_time=wall, backend="scip", message=raw)
        if scip.getNSols() == 0:
            status = TIMEOUT_NO_SOLUTION if raw in ("timelimit", "gaplimit") else ERROR
            return SolveReport(status, wall_time=wall, backend="scip", message=raw)
        best = scip.getBestSol()
        by_name = {v.name: scip.getSolVal(best, v) for v in scip.getVars(transformed=False)}
        values = np.array([by_name.get(nm, 0.0) for nm in model.var_names])
        obj = model.objective_value(values)
        bound = scip.getDualbound() + model.obj_const
        status = OPTIMAL if raw == "optimal" else FEASIBLE_TIMEOUT
        if status == OPTIMAL:
            bound = obj if relative_gap(obj, bound, model.sense) is None else bound
        gap = relative_gap(obj, bound, model.sense)
        return SolveReport(status, obj, values, None, bound, gap, wall, "scip", raw)


_BACKENDS = {"highs": HighsBackend, "cbc": CbcBackend, "scip": ScipBackend}


def backend_ids() -> list[str]:
    return list(_BACKENDS)


def get_backend(backend_id: str) -> Backend:
    try:
        return _BACKENDS[backend_id]()
    except KeyError:
        raise BackendError(f"unknown backend {backend_id!r}; choose from {', '.join(_BACKENDS)}") from None


def solve(model: MilpModel, backend: str | Backend = "highs", options: SolverOptions | None = None) -> SolveReport:
    engine = get_backend(backend) if isinstance(backend, str) else backend
    if not engine.available():
        raise BackendError(f"backend {engine.capability.id} is not available")
    return engine.solve(model, options)
