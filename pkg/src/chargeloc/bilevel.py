"""Competitive location of charging stations under user equilibrium.

The leader opens exactly ``X`` candidate stations to maximise the throughput
of its stations once users settle into the lower-level equilibrium.  Two
single-level MILPs are offered:

* the linearization model: LLP-lin is replaced by primal feasibility, dual
  feasibility and the strong-duality inequality; the products of duals and
  location binaries are linearised by indicator or big-M constraints and the
  throughput objective is interpolated on the rate grid with SOS2 weights;
* the surrogate heuristic: LLP-lin is minimised jointly over flows and
  locations, which yields a bilevel-feasible point quickly.

Reported throughput always comes from re-solving LLP-lin at the chosen
locations and evaluating the exact queue metrics.
"""
from __future__ import annotations

import itertools
import json
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .equilibrium import (EquilibriumSolution, LowerLevelLP, build_llp_lin, solve_llp_lin, true_throughput)
from .instance import CANDIDATE, FIXED_OPEN, Instance, InstanceError, load_instance
from .queueing import QueueSpec, queue_metrics
from .solver import ModelBuilder, SolverOptions, get_backend, solve
from .solver.model import FEASIBLE_TIMEOUT, INF, OPTIMAL, MilpModel, ModelError

BIG_M_SAFETY = 10.0
AUDIT_RTOL = 1e-6


class LocationError(RuntimeError):
    def __init__(self, message: str, status: str = "error"):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class FeasibleSetSpec:
    fixed_open: tuple[str, ...]
    candidates: tuple[str, ...]
    budget: int
    competitors: tuple[str, ...] = ()
    exact: bool = True

    def __post_init__(self):
        if self.budget < 0:
            raise InstanceError("budget must be >= 0", "/budget")
        if self.budget > len(self.candidates):
            raise InstanceError(f"budget {self.budget} exceeds the {len(self.candidates)} candidates", "/budget")
        if set(self.fixed_open) & set(self.candidates):
            raise InstanceError("a station cannot be both fixed open and a candidate", "/candidates")

    @classmethod
    def from_instance(cls, instance: Instance, budget: int, exact: bool = True) -> "FeasibleSetSpec":
        fixed = tuple(st.id for st in instance.stations if st.is_leader and not st.is_candidate)
        cands = tuple(st.id for st in instance.stations if st.is_candidate)
        comps = tuple(st.id for st in instance.stations if not st.is_leader)
        return cls(fixed, cands, int(budget), comps, exact)

    def apply(self, instance: Instance) -> Instance:
        """Instance whose candidate statuses follow this spec."""
        ids = set(instance.station_ids)
        for sid in (*self.fixed_open, *self.candidates, *self.competitors):
            if sid not in ids:
                raise InstanceError(f"unknown station id {sid!r}", "/candidates")
        stations = []
        for st in instance.stations:
            if st.id in self.candidates:
                if not st.is_leader:
                    raise InstanceError(f"competitor station {st.id!r} cannot be a candidate", "/candidates")
                st = replace(st, status=CANDIDATE)
            elif st.is_leader:
                st = replace(st, status=FIXED_OPEN)
            stations.append(st)
        return replace(instance, stations=tuple(stations))


def throughput_table(instance: Instance, stations: Sequence[int]) -> np.ndarray:
    """f^t_j at the rate breakpoints with exact balking probabilities."""
    grid = instance.lam_grid
    out = np.empty((len(stations), len(grid)))
    for k, j in enumerate(stations):
        spec = instance.stations[j].queue
        out[k] = [q * (1.0 - queue_metrics(spec, float(q)).balk_prob) for q in grid]
    return out


def analytic_big_m(lp: LowerLevelLP, safety: float = BIG_M_SAFETY) -> np.ndarray:
    """Upper bounds on the duals of the closing rows, one per demand node.

    Some optimal dual keeps these multipliers at zero for open stations and at
    ``max(0, gamma_i - delta_j - t_ij - sum_n g_n nu_ijn)`` for closed ones;
    each term is bounded by the largest travel time, marginal congestion cost
    and entropy slope on the grids.
    """
    inst = lp.instance
    dis = inst.disutility
    wmax = max(float(np.max(t.wait)) for t in lp.tables.congestion)
    pmax = max(float(np.max(t.balk)) for t in lp.tables.congestion)
    slopes = lp.tables.entropy_slope
    ent = dis.theta_inv * (abs(float(slopes.min())) + abs(float(slopes.max())))
    bound = inst.travel.max(axis=1) + dis.alpha * wmax + dis.beta * pmax + ent
    return safety * np.maximum(bound, 1e-6)


@dataclass
class FlpModel:
    model: MilpModel
    lp: LowerLevelLP
    encoding: str
    sos2: str
    big_m: np.ndarray | None
    link_rows: np.ndarray  # LLP row index of each Pi variable
    link_cands: np.ndarray  # candidate position of each Pi variable
    link_coef: np.ndarray  # B entry of each Pi variable
    leaders: np.ndarray
    ft: np.ndarray
    build_s: float = 0.0

    def dual_side(self, values: np.ndarray) -> float:
        pi = values[self.model.var_groups["pi"]]
        big_pi = values[self.model.var_groups["Pi"]] if self.link_rows.size else np.zeros(0)
        return float(self.lp.b @ pi - self.link_coef @ big_pi)

    def primal_side(self, values: np.ndarray) -> float:
        z = np.concatenate([values[self.model.var_groups[g]].ravel() for g in _primal_groups(self.lp)])
        return float(self.lp.model.obj @ z)


def _primal_groups(lp: LowerLevelLP) -> list[str]:
    return [g for g in ("y", "lam", "phil", "phiw", "phip") if g in lp.model.var_groups]


def _add_primal_block(mb: ModelBuilder, lp: LowerLevelLP, x_idx: np.ndarray, obj_weight: float = 0.0) -> np.ndarray:
    """Copy LLP-lin variables and rows; returns the column map LP -> MILP."""
    src = lp.model
    colmap = np.empty(src.num_vars, dtype=np.int64)
    for g in _primal_groups(lp):
        loc = src.var_groups[g]
        idx = mb.add_vars(g, loc.shape, lb=src.lb[loc], ub=src.ub[loc], obj=obj_weight * src.obj[loc])
        colmap[loc.ravel()] = idx.ravel()
    A = src.A.tocoo()
    Bc = lp.B.tocoo()
    mb.add_rows("primal", src.num_rows,
                np.concatenate([A.row, Bc.row]),
                np.concatenate([colmap[A.col], x_idx[Bc.col]]),
                np.concatenate([A.data, Bc.data]),
                src.row_sense, src.rhs,
                names=[f"p_{nm}" for nm in src.row_names])
    return colmap


def _add_cardinality(mb: ModelBuilder, x_idx: np.ndarray, fs: FeasibleSetSpec) -> None:
    n = len(x_idx)
    mb.add_rows("card", 1, np.zeros(n, int), x_idx, np.ones(n), "=" if fs.exact else "<", fs.budget)


def build_flp_milp(
    instance: Instance,
    fs: FeasibleSetSpec,
    encoding: str = "bigM",
    sos2: str = "binary",
    big_m: np.ndarray | Sequence[float] | None = None,
    lp: LowerLevelLP | None = None,
) -> FlpModel:
    """Single-level MILP of the linearization approach."""
    if encoding not in ("indicator", "bigM"):
        raise ModelError(f"encoding must be 'indicator' or 'bigM', got {encoding!r}")
    if sos2 not in ("native", "binary"):
        raise ModelError(f"sos2 must be 'native' or 'binary', got {sos2!r}")
    start = time.perf_counter()
    instance = fs.apply(instance)
    lp = lp or build_llp_lin(instance)
    src = lp.model
    n_cand = len(lp.candidates)
    grid = instance.lam_grid
    n_pts = len(grid)

    mb = ModelBuilder("flp_lin")
    x = mb.add_vars("x", (n_cand,), lb=0.0, ub=1.0, vtype="B")
    colmap = _add_primal_block(mb, lp, x)

    # duals: free on equality rows, nonnegative on >= rows
    pi_lb = np.where(src.row_sense == "=", -INF, 0.0)
    pi = mb.add_vars("pi", (src.num_rows,), lb=pi_lb)
    Bc = lp.B.tocoo()
    n_link = Bc.nnz
    big_pi = mb.add_vars("Pi", (n_link,), lb=0.0) if n_link else np.zeros(0, int)

    # dual feasibility: A^T pi <= c on the nonnegative y, = c on free columns
    At = src.A.T.tocoo()
    sense = np.where(np.isfinite(src.lb) & (src.lb == 0.0) & ~np.isfinite(src.ub), "<", "=")
    mb.add_rows("dualfeas", src.num_vars, At.row, pi[At.col], At.data, sense, src.obj,
                names=[f"d_{nm}" for nm in src.var_names])

    # strong duality: c'z - b'pi + sum B_lk Pi_lk <= 0
    cols = np.concatenate([colmap, pi, big_pi])
    vals = np.concatenate([src.obj, -src.rhs, Bc.data])
    keep = vals != 0
    mb.add_rows("strongdual", 1, np.zeros(int(keep.sum()), int), cols[keep], vals[keep], "<", 0.0)

    m_vals = None
    if n_link:
        link_x = x[Bc.col]
        link_pi = pi[Bc.row]
        demand_of_row = _xi_demand(lp, Bc.row)
        if encoding == "bigM":
            bounds = analytic_big_m(lp) if big_m is None else np.asarray(big_m, dtype=float)
            if bounds.shape != (instance.n_demands,) or not np.all(np.isfinite(bounds)) or np.any(bounds <= 0):
                raise ModelError(f"big-M needs one positive finite bound per demand node, got shape {bounds.shape}")
            m_vals = bounds[demand_of_row]
            k = np.arange(n_link)
            # Pi <= M x ; Pi - pi + M x <= M ; Pi - pi <= 0 ; pi <= M
            mb.add_rows("linkA", n_link, np.concatenate([k, k]), np.concatenate([big_pi, link_x]),
                        np.concatenate([np.ones(n_link), -m_vals]), "<", 0.0)
            mb.add_rows("linkB", n_link, np.concatenate([k, k, k]), np.concatenate([big_pi, link_pi, link_x]),
                        np.concatenate([-np.ones(n_link), np.ones(n_link), m_vals]), "<", m_vals)
            mb.add_rows("linkC", n_link, np.concatenate([k, k]), np.concatenate([big_pi, link_pi]),
                        np.concatenate([np.ones(n_link), -np.ones(n_link)]), "<", 0.0)
        else:
            for k in range(n_link):
                mb.add_indicator(f"on_{k}", link_x[k], 1, [big_pi[k], link_pi[k]], [1.0, -1.0], "=", 0.0)
                mb.add_indicator(f"off_{k}", link_x[k], 0, [big_pi[k]], [1.0], "=", 0.0)

    leaders = lp.leaders
    ft = throughput_table(instance, leaders)
    n_l = len(leaders)
    if n_l:
        a = mb.add_vars("a", (n_l, n_pts), lb=0.0, ub=1.0, obj=ft)
        rows = np.repeat(np.arange(n_l), n_pts)
        mb.add_rows("convex", n_l, rows, a.ravel(), np.ones(a.size), "=", 1.0)
        lam_cols = colmap[src.var_groups["lam"][leaders]]
        mb.add_rows("interp", n_l, np.concatenate([np.arange(n_l), rows]),
                    np.concatenate([lam_cols, a.ravel()]),
                    np.concatenate([np.ones(n_l), -np.tile(grid, n_l)]), "=", 0.0)
        if sos2 == "native":
            for k in range(n_l):
                mb.add_sos2(f"sos_{k}", a[k], np.arange(1, n_pts + 1, dtype=float))
        else:
            z = mb.add_vars("z", (n_l, n_pts - 1), lb=0.0, ub=1.0, vtype="B")
            mb.add_rows("segsum", n_l, np.repeat(np.arange(n_l), n_pts - 1), z.ravel(),
                        np.ones(z.size), "=", 1.0)
            r, c, v = [], [], []
            for k in range(n_l):
                for n in range(n_pts):
                    row = k * n_pts + n
                    r.append(row), c.append(a[k, n]), v.append(1.0)
                    for seg in (n - 1, n):
                        if 0 <= seg < n_pts - 1:
                            r.append(row), c.append(z[k, seg]), v.append(-1.0)
            mb.add_rows("adjacent", n_l * n_pts, r, c, v, "<", 0.0)

    _add_cardinality(mb, x, fs)
    model = mb.build("max")
    return FlpModel(model, lp, encoding, sos2, m_vals, Bc.row, Bc.col, Bc.data.astype(float), leaders, ft,
                    time.perf_counter() - start)


def _xi_demand(lp: LowerLevelLP, rows: np.ndarray) -> np.ndarray:
    xi = lp.model.row_groups["xi"]
    n_l = len(lp.leaders)
    return (np.asarray(rows) - xi[0]) // max(n_l, 1)


@dataclass(frozen=True)
class BigMAudit:
    max_ratio: float
    at_bound: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not self.at_bound


def audit_big_m(flp: FlpModel, values: np.ndarray, rtol: float = AUDIT_RTOL) -> BigMAudit:
    """Flag closing-row duals that the big-M bound actually constrains.

    For an open candidate the dual itself must stay below ``M``.  For a
    closed one the dual has no objective weight and may rest anywhere above
    the smallest value dual feasibility of the matching flow column allows,
    so that smallest value is what gets compared with ``M``.
    """
    if flp.big_m is None or not flp.link_rows.size:
        return BigMAudit(0.0, ())
    src = flp.lp.model
    pi_all = values[flp.model.var_groups["pi"]]
    pi = pi_all[flp.link_rows]
    x = values[flp.model.var_groups["x"]][flp.link_cands] > 0.5
    # each closing row has a single -1 on its flow column
    A = src.A.tocsr()
    ycol = np.array([A.indices[A.indptr[r]] for r in flp.link_rows])
    reduced = (A.T @ pi_all)[ycol] - src.obj[ycol]
    required = np.maximum(0.0, reduced + pi)
    effective = np.where(x, pi, required)
    ratio = effective / flp.big_m
    bad = tuple(int(k) for k in np.flatnonzero(effective >= flp.big_m * (1.0 - rtol)))
    if bad:
        warnings.warn(f"{len(bad)} dual values sit at their big-M bound; increase big_m", RuntimeWarning)
    return BigMAudit(float(ratio.max(initial=0.0)), bad)


@dataclass
class LocationSolution:
    x: tuple[str, ...]
    open_mask: np.ndarray
    equilibrium: EquilibriumSolution
    ttr: float
    atr: float
    status: str
    model: str
    backend: str
    milp_objective: float | None = None
    milp_gap: float | None = None
    build_s: float = 0.0
    solve_s: float = 0.0
    primal_side: float | None = None
    dual_side: float | None = None
    audit: BigMAudit | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "x": list(self.x),
            "ttr": self.ttr,
            "atr": self.atr,
            "milp_gap": self.milp_gap,
            "build_s": self.build_s,
            "solve_s": self.solve_s,
            "status": self.status,
            "model": self.model,
            "backend": self.backend,
            "milp_objective": self.milp_objective,
            "lower_level_objective": self.equilibrium.objective,
            "dual_side": self.dual_side,
            "throughput": {sid: float(v) for sid, v in
                           zip(self.meta.get("station_ids", []), self.meta.get("per_station", []))},
        }


def _default_options(time_limit: float | None, options: SolverOptions | None) -> SolverOptions:
    options = options or SolverOptions()
    if time_limit is not None:
        options = replace(options, time_limit=float(time_limit))
    return options


def _evaluate(instance: Instance, lp: LowerLevelLP, x_vals: np.ndarray, **kw) -> LocationSolution:
    chosen = lp.candidates[np.asarray(x_vals) > 0.5]
    mask = instance.open_mask([int(j) for j in chosen])
    eq = solve_llp_lin(instance, mask, lp=lp)
    rep = true_throughput(eq, instance)
    ids = tuple(instance.stations[j].id for j in chosen)
    meta = {"station_ids": instance.station_ids, "per_station": rep.per_station.tolist()}
    return LocationSolution(ids, mask, eq, rep.ttr, rep.atr, meta=meta, **kw)


def _check_report(report, what: str) -> None:
    if report.status in (OPTIMAL, FEASIBLE_TIMEOUT) and report.values is not None:
        return
    raise LocationError(f"{what} ended with status {report.status}: {report.message}", report.status)


def solve_flp_linearization(
    instance: Instance,
    fs: FeasibleSetSpec,
    backend: str = "highs",
    time_limit: float | None = 3600.0,
    encoding: str | None = None,
    sos2: str | None = None,
    big_m=None,
    options: SolverOptions | None = None,
) -> LocationSolution:
    engine = get_backend(backend)
    cap = engine.capability
    encoding = encoding or ("indicator" if cap.supports_indicator else "bigM")
    sos2 = sos2 or ("native" if cap.supports_sos2 else "binary")
    instance = fs.apply(instance)
    flp = build_flp_milp(instance, fs, encoding, sos2, big_m)
    report = solve(flp.model, engine, _default_options(time_limit, options))
    _check_report(report, "linearization model")
    values = report.values
    x_vals = values[flp.model.var_groups["x"]]
    audit = audit_big_m(flp, values)
    return _evaluate(
        instance, flp.lp, x_vals, status=report.status, model="linearization", backend=cap.id,
        milp_objective=report.objective, milp_gap=report.gap, build_s=flp.build_s, solve_s=report.wall_time,
        primal_side=flp.primal_side(values), dual_side=flp.dual_side(values), audit=audit,
    )


def build_heuristic_milp(instance: Instance, fs: FeasibleSetSpec, lp: LowerLevelLP | None = None
                         ) -> tuple[MilpModel, LowerLevelLP]:
    instance = fs.apply(instance)
    lp = lp or build_llp_lin(instance)
    mb = ModelBuilder("flp_heuristic")
    x = mb.add_vars("x", (len(lp.candidates),), lb=0.0, ub=1.0, vtype="B")
    _add_primal_block(mb, lp, x, obj_weight=1.0)
    _add_cardinality(mb, x, fs)
    return mb.build("min"), lp


def solve_flp_heuristic(
    instance: Instance,
    fs: FeasibleSetSpec,
    backend: str = "highs",
    time_limit: float | None = 3600.0,
    options: SolverOptions | None = None,
) -> LocationSolution:
    """Minimise the lower-level objective jointly over flows and locations."""
    start = time.perf_counter()
    instance = fs.apply(instance)
    model, lp = build_heuristic_milp(instance, fs)
    build_s = time.perf_counter() - start
    report = solve(model, backend, _default_options(time_limit, options))
    _check_report(report, "heuristic model")
    x_vals = report.values[model.var_groups["x"]]
    return _evaluate(instance, lp, x_vals, status=report.status, model="heuristic", backend=backend,
                     milp_objective=report.objective, milp_gap=report.gap, build_s=build_s,
                     solve_s=report.wall_time)


@dataclass(frozen=True)
class EnumerationResult:
    subsets: tuple[tuple[str, ...], ...]
    ttr: tuple[float, ...]

    @property
    def best(self) -> tuple[tuple[str, ...], float]:
        k = int(np.argmax(self.ttr))
        return self.subsets[k], self.ttr[k]


def enumerate_locations(instance: Instance, fs: FeasibleSetSpec, max_subsets: int = 10000) -> EnumerationResult:
    """Brute force: solve the lower level for every feasible subset."""
    instance = fs.apply(instance)
    sizes = [fs.budget] if fs.exact else range(fs.budget + 1)
    count = sum(math.comb(len(fs.candidates), k) for k in sizes)
    if count > max_subsets:
        raise ValueError(f"{count} subsets exceed the enumeration limit {max_subsets}")
    lp = build_llp_lin(instance)
    subsets, ttrs = [], []
    for k in sizes:
        for combo in itertools.combinations(fs.candidates, k):
            eq = solve_llp_lin(instance, instance.open_mask(combo), lp=lp)
            subsets.append(tuple(combo))
            ttrs.append(true_throughput(eq, instance).ttr)
    return EnumerationResult(tuple(subsets), tuple(ttrs))


def evaluate_locations(instance: Instance, fs: FeasibleSetSpec, chosen: Sequence[str]) -> float:
    """True leader throughput of a location decision under ``instance``."""
    instance = fs.apply(instance)
    eq = solve_llp_lin(instance, instance.open_mask(list(chosen)))
    return true_throughput(eq, instance).ttr


SINGLE, MULTI = "single", "multi"


@dataclass(frozen=True)
class Setting:
    queue_family: str
    alpha: float
    beta: float
    theta_inv: float

    @property
    def label(self) -> str:
        return f"{self.queue_family}({self.alpha:g},{self.beta:g},{self.theta_inv:g})"


def single_server_equivalent(spec: QueueSpec) -> QueueSpec:
    """One server with the same total rate and the same buffer."""
    return QueueSpec(1, 1 + spec.buffer, spec.total_rate, spec.erlang_shape)


def apply_setting(instance: Instance, setting: Setting) -> Instance:
    if setting.queue_family not in (SINGLE, MULTI):
        raise ValueError(f"queue family must be {SINGLE!r} or {MULTI!r}")
    inst = instance.with_disutility(setting.alpha, setting.beta, setting.theta_inv)
    if setting.queue_family == SINGLE:
        inst = inst.with_queues(lambda st: single_server_equivalent(st.queue))
    return inst


@dataclass(frozen=True)
class RobustnessResult:
    labels: tuple[str, ...]
    locations: tuple[tuple[str, ...], ...]
    ttr: np.ndarray  # ttr[a_eval, a_solved]
    gaps: np.ndarray  # gaps[a_eval, a_solved]


def robustness_cross_eval(
    settings: Sequence[Setting],
    instance: Instance,
    fs: FeasibleSetSpec,
    model: str = "linearization",
    backend: str = "highs",
    time_limit: float | None = 3600.0,
) -> RobustnessResult:
    """Relative throughput loss of each setting's decision under every other setting."""
    solver = solve_flp_linearization if model == "linearization" else solve_flp_heuristic
    locs = []
    for s in settings:
        locs.append(solver(apply_setting(instance, s), fs, backend=backend, time_limit=time_limit).x)
    n = len(settings)
    ttr = np.empty((n, n))
    for a_eval, s in enumerate(settings):
        inst = apply_setting(instance, s)
        for a_sol in range(n):
            ttr[a_eval, a_sol] = evaluate_locations(inst, fs, locs[a_sol])
    diag = np.diag(ttr)[:, None]
    gaps = (diag - ttr) / np.where(diag != 0, diag, 1.0)
    return RobustnessResult(tuple(s.label for s in settings), tuple(locs), ttr, gaps)


@dataclass(frozen=True)
class Scenario:
    instance_path: str | None
    budget: int
    candidates: tuple[str, ...] | None
    encoding: str | None
    sos2: str | None
    time_limit: float
    backend: str
    model: str
    exact: bool

    def feasible_set(self, instance: Instance) -> FeasibleSetSpec:
        if self.candidates is None:
            return FeasibleSetSpec.from_instance(instance, self.budget, self.exact)
        cands = tuple(self.candidates)
        fixed = tuple(st.id for st in instance.stations if st.is_leader and st.id not in cands)
        comps = tuple(st.id for st in instance.stations if not st.is_leader)
        return FeasibleSetSpec(fixed, cands, self.budget, comps, self.exact)


def scenario_from_json(doc: Mapping[str, Any]) -> Scenario:
    if not isinstance(doc, Mapping):
        raise InstanceError("scenario must be a JSON object", "/")
    budget = doc.get("budget", 0)
    if not isinstance(budget, int) or budget < 0:
        raise InstanceError("budget must be a nonnegative integer", "/budget")
    enc = doc.get("encoding")
    if enc not in (None, "indicator", "bigM"):
        raise InstanceError("encoding must be indicator or bigM", "/encoding")
    sos = doc.get("sos2")
    if sos not in (None, "native", "binary"):
        raise InstanceError("sos2 must be native or binary", "/sos2")
    model = doc.get("model", "linearization")
    if model not in ("linearization", "heuristic"):
        raise InstanceError("model must be linearization or heuristic", "/model")
    cands = doc.get("candidates")
    return Scenario(
        instance_path=doc.get("instance"),
        budget=budget,
        candidates=None if cands is None else tuple(str(c) for c in cands),
        encoding=enc,
        sos2=sos,
        time_limit=float(doc.get("time_limit", 3600.0)),
        backend=str(doc.get("backend", "highs")),
        model=model,
        exact=bool(doc.get("exact", True)),
    )


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_json(doc)


def run_scenario(scenario: Scenario, instance: Instance | None = None, base_dir: Path | None = None
                 ) -> LocationSolution:
    if instance is None:
        if scenario.instance_path is None:
            raise InstanceError("scenario has no instance path", "/instance")
        path = Path(scenario.instance_path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        instance = load_instance(path)
    fs = scenario.feasible_set(instance)
    if scenario.model == "heuristic":
        return solve_flp_heuristic(instance, fs, scenario.backend, scenario.time_limit)
    return solve_flp_linearization(instance, fs, scenario.backend, scenario.time_limit,
                                   encoding=scenario.encoding, sos2=scenario.sos2)
