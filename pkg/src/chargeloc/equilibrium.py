"""Lower-level user equilibrium: PWL linear program and nonlinear oracles.

Users at demand node i pick an open station j with disutility
``t_ij + alpha * wbar_j(lam_j) + beta * pbar_j(lam_j)`` plus Gumbel noise of
scale ``theta_inv``.  The equilibrium minimises the convex program

    theta_inv * sum y ln y + sum t y + sum_j (alpha f^w_j(lam_j) + beta f^p_j(lam_j))

over assignments ``y`` with ``sum_j y_ij = d_i`` and closed stations empty.
``solve_llp_lin`` replaces the convex terms by tangent-plane underestimators
and solves an LP; the fixed-point and Frank-Wolfe solvers work on the exact
functions and serve as oracles.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.special import softmax

from .instance import Instance, InstanceError
from .queueing import CongestionTable, congestion_cost, congestion_integrals, queue_metrics
from .solver import MilpModel, ModelBuilder, SolverOptions, solve
from .solver.model import INF, OPTIMAL

GAP_EPS = 1e-9


class EquilibriumError(RuntimeError):
    """Solver failure or non-convergence of an iterative method."""

    def __init__(self, message: str, residual: float | None = None, solution=None):
        super().__init__(message)
        self.residual = residual
        self.solution = solution


def optimality_gap(a: float, b: float, eps: float = GAP_EPS) -> float:
    return abs(a - b) / max(abs(a), abs(b), eps)


@dataclass(frozen=True)
class Underestimators:
    """Breakpoint values and slopes of the convex objective terms."""

    y_grid: np.ndarray
    entropy_value: np.ndarray
    entropy_slope: np.ndarray
    congestion: tuple[CongestionTable, ...]


def entropy(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(z > 0, z * np.log(np.where(z > 0, z, 1.0)), 0.0)


def underestimators(instance: Instance) -> Underestimators:
    yg = instance.y_grid
    lg = instance.lam_grid
    tables = tuple(congestion_integrals(st.queue, lg) for st in instance.stations)
    return Underestimators(yg, entropy(yg), np.log(yg) + 1.0, tables)


@dataclass
class LowerLevelLP:
    """LLP-lin in the form ``A z >= b - B x`` (plus the equality rows).

    ``model`` carries ``b`` as its right-hand side, i.e. every candidate
    closed.  ``B`` has one column per candidate station in ``candidates``.
    """

    instance: Instance
    model: MilpModel
    B: sparse.csr_matrix
    candidates: np.ndarray
    leaders: np.ndarray
    tables: Underestimators

    @property
    def b(self) -> np.ndarray:
        return self.model.rhs

    def candidate_vector(self, open_mask: np.ndarray) -> np.ndarray:
        return np.asarray(open_mask, dtype=float)[self.candidates]

    def rhs(self, open_mask: np.ndarray) -> np.ndarray:
        return self.model.rhs - self.B @ self.candidate_vector(open_mask)

    def at(self, open_mask: np.ndarray) -> MilpModel:
        m = self.model
        return MilpModel(
            name=m.name, var_names=m.var_names, lb=m.lb, ub=m.ub, vtype=m.vtype, obj=m.obj, sense=m.sense,
            A=m.A, row_names=m.row_names, row_sense=m.row_sense, rhs=self.rhs(open_mask),
            var_groups=m.var_groups, row_groups=m.row_groups,
        )


def build_llp_lin(instance: Instance, tables: Underestimators | None = None) -> LowerLevelLP:
    tables = tables or underestimators(instance)
    d = instance.d
    n_i, n_s, n_pts = instance.n_demands, instance.n_stations, instance.n_points
    dis = instance.disutility
    leaders = instance.leader_idx
    cands = instance.candidate_idx
    cand_pos = {int(j): k for k, j in enumerate(cands)}
    entropic = dis.theta_inv > 0

    mb = ModelBuilder("llp_lin")
    y = mb.add_vars("y", (n_i, n_s), lb=0.0, obj=instance.travel)
    lam = mb.add_vars("lam", (n_s,), lb=-INF)
    phil = mb.add_vars("phil", (n_i, n_s), lb=-INF, obj=dis.theta_inv) if entropic else None
    phiw = mb.add_vars("phiw", (n_s,), lb=-INF, obj=dis.alpha)
    phip = mb.add_vars("phip", (n_s,), lb=-INF, obj=dis.beta)

    ii, jj = np.meshgrid(np.arange(n_i), np.arange(n_s), indexing="ij")
    mb.add_rows("gamma", n_i, ii.ravel(), y.ravel(), np.ones(y.size), "=", d)
    mb.add_rows("delta", n_s,
                np.concatenate([np.arange(n_s), jj.ravel()]),
                np.concatenate([lam, y.ravel()]),
                np.concatenate([np.ones(n_s), -np.ones(y.size)]), "=", 0.0)

    n_l = len(leaders)
    xi_rows = np.arange(n_i * n_l)
    xi_i, xi_j = np.divmod(xi_rows, n_l)
    xi_station = leaders[xi_j] if n_l else np.zeros(0, int)
    xi_b = np.array([0.0 if int(j) in cand_pos else -d[i] for i, j in zip(xi_i, xi_station)])
    mb.add_rows("xi", len(xi_rows), xi_rows, y[xi_i, xi_station], -np.ones(len(xi_rows)), ">", xi_b)
    b_rows, b_cols, b_vals = [], [], []
    for r, (i, j) in enumerate(zip(xi_i, xi_station)):
        if int(j) in cand_pos:
            b_rows.append(r)
            b_cols.append(cand_pos[int(j)])
            b_vals.append(d[i])

    if entropic:
        # phil_ij - g_n y_ij >= -yhat_n, the tangent of z ln z at yhat_n
        g = tables.entropy_slope
        n_rows = n_i * n_s * n_pts
        rows = np.arange(n_rows)
        pair = rows // n_pts
        npt = rows % n_pts
        mb.add_rows("nul", n_rows, np.concatenate([rows, rows]),
                    np.concatenate([phil.ravel()[pair], y.ravel()[pair]]),
                    np.concatenate([np.ones(n_rows), -g[npt]]), ">", -tables.y_grid[npt])

    lg = instance.lam_grid
    for name, phi, kind in (("nuw", phiw, "w"), ("nup", phip, "p")):
        slopes = np.empty(n_s * n_pts)
        rhs = np.empty(n_s * n_pts)
        for j, tab in enumerate(tables.congestion):
            sl = tab.wait if kind == "w" else tab.balk
            val = tab.waiting_cost if kind == "w" else tab.balking_cost
            slopes[j * n_pts:(j + 1) * n_pts] = sl
            rhs[j * n_pts:(j + 1) * n_pts] = val - sl * lg
        rows = np.arange(n_s * n_pts)
        st = rows // n_pts
        mb.add_rows(name, len(rows), np.concatenate([rows, rows]), np.concatenate([phi[st], lam[st]]),
                    np.concatenate([np.ones(len(rows)), -slopes]), ">", rhs)

    model = mb.build("min")
    m_xi = model.row_groups["xi"]
    B = sparse.csr_matrix(
        (b_vals, (m_xi[np.asarray(b_rows, dtype=int)] if b_rows else np.zeros(0, int), b_cols)),
        shape=(model.num_rows, len(cands)),
    )
    return LowerLevelLP(instance, model, B, cands, leaders, tables)


@dataclass
class EquilibriumSolution:
    flows: np.ndarray
    lam: np.ndarray
    objective: float
    method: str
    open_mask: np.ndarray
    balk: np.ndarray
    wait: np.ndarray
    duals: dict[str, np.ndarray] | None = None
    dual_objective: float | None = None
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def throughput(self) -> np.ndarray:
        return self.lam * (1.0 - self.balk)


def station_metrics(instance: Instance, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    balk = np.empty(instance.n_stations)
    wait = np.empty(instance.n_stations)
    for j, st in enumerate(instance.stations):
        m = queue_metrics(st.queue, max(0.0, float(lam[j])))
        balk[j], wait[j] = m.balk_prob, m.avg_wait
    return balk, wait


def _as_mask(instance: Instance, open_set) -> np.ndarray:
    if open_set is None:
        return instance.open_mask(None)
    arr = np.asarray(open_set)
    if arr.dtype == bool and arr.shape == (instance.n_stations,):
        mask = arr.copy()
        if not np.all(mask[instance.fixed_idx]):
            raise InstanceError("fixed-open stations cannot be closed")
        return mask
    return instance.open_mask(list(open_set))


def _finish(instance: Instance, flows: np.ndarray, objective: float, method: str, mask: np.ndarray,
            **kw) -> EquilibriumSolution:
    flows = np.where(flows < 0, 0.0, flows)
    lam = flows.sum(axis=0)
    balk, wait = station_metrics(instance, lam)
    return EquilibriumSolution(flows, lam, objective, method, mask, balk, wait, **kw)


def solve_llp_lin(
    instance: Instance,
    open_set=None,
    backend: str = "highs",
    options: SolverOptions | None = None,
    lp: LowerLevelLP | None = None,
) -> EquilibriumSolution:
    """Solve the piecewise-linear lower level for a fixed location decision."""
    mask = _as_mask(instance, open_set)
    if not mask.any():
        raise EquilibriumError("no station is open")
    lp = lp or build_llp_lin(instance)
    model = lp.at(mask)
    report = solve(model, backend, options)
    if report.status != OPTIMAL:
        raise EquilibriumError(f"LLP-lin solve failed with status {report.status}: {report.message}")
    flows = report.values[model.var_groups["y"]]
    duals = None
    dual_obj = None
    if report.duals is not None:
        pi = report.duals
        shapes = {
            "gamma": (instance.n_demands,),
            "delta": (instance.n_stations,),
            "xi": (instance.n_demands, len(lp.leaders)),
            "nul": (instance.n_demands, instance.n_stations, instance.n_points),
            "nuw": (instance.n_stations, instance.n_points),
            "nup": (instance.n_stations, instance.n_points),
        }
        duals = {k: pi[model.row_groups[k]].reshape(shape) for k, shape in shapes.items() if k in model.row_groups}
        dual_obj = float(model.rhs @ pi)
    return _finish(instance, flows, report.objective, "lp", mask, duals=duals, dual_objective=dual_obj,
                   meta={"backend": report.backend, "wall_time": report.wall_time})


def llp_objective(instance: Instance, flows: np.ndarray) -> float:
    """Exact lower-level objective at ``flows``, with exact congestion integrals."""
    dis = instance.disutility
    lam = flows.sum(axis=0)
    total = float(np.sum(instance.travel * flows))
    if dis.theta_inv > 0:
        total += dis.theta_inv * float(np.sum(entropy(flows)))
    if dis.alpha or dis.beta:
        for j, st in enumerate(instance.stations):
            fw, fp = congestion_cost(st.queue, max(0.0, float(lam[j])))
            total += dis.alpha * fw + dis.beta * fp
    return total


def disutilities(instance: Instance, lam: np.ndarray, mask: np.ndarray) -> np.ndarray:
    dis = instance.disutility
    balk, wait = station_metrics(instance, lam) if (dis.alpha or dis.beta) else (0.0, 0.0)
    v = instance.travel + dis.alpha * wait + dis.beta * balk
    return np.where(mask[None, :], v, np.inf)


def solve_mnl_fixed_point(
    instance: Instance,
    open_set=None,
    damping: float = 0.5,
    tol: float | None = None,
    max_iter: int = 10000,
    adaptive: bool = True,
    min_damping: float = 1e-4,
) -> EquilibriumSolution:
    """Damped iteration ``y <- (1-g) y + g MNL(v(lam))`` on the logit equilibrium.

    With ``adaptive`` the damping is halved (down to ``min_damping``) each
    time the residual grows, which stops the oscillation seen under strong
    congestion.
    """
    theta_inv = instance.disutility.theta_inv
    if not theta_inv > 0:
        raise ValueError("the logit fixed point needs theta_inv > 0")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    mask = _as_mask(instance, open_set)
    if not mask.any():
        raise EquilibriumError("no station is open")
    d = instance.d
    tol = 1e-8 * float(d.sum()) if tol is None else tol

    def response(lam):
        v = disutilities(instance, lam, mask)
        return d[:, None] * softmax(-v / theta_inv, axis=1)

    flows = response(np.zeros(instance.n_stations))
    residual = math.inf
    for it in range(1, max_iter + 1):
        lam = flows.sum(axis=0)
        target = response(lam)
        # undamped and per flow, so neither a small damping nor rows that
        # cancel within a station can fake convergence; bounds |d lam_j| too
        prev, residual = residual, float(np.max(np.abs(target - flows).sum(axis=0)))
        if residual <= tol:
            return _finish(instance, flows, llp_objective(instance, flows), "fixed-point", mask,
                           iterations=it, residual=residual)
        if adaptive and residual > prev:
            damping = max(min_damping, 0.5 * damping)
        flows = (1.0 - damping) * flows + damping * target
    sol = _finish(instance, flows, llp_objective(instance, flows), "fixed-point", mask,
                  iterations=max_iter, residual=residual, converged=False)
    raise EquilibriumError(f"fixed point did not converge in {max_iter} iterations (residual {residual:.3g})",
                           residual, sol)


def _directional(instance: Instance, travel_term: float, lam: np.ndarray, dlam: np.ndarray,
                 step: float, active: np.ndarray) -> float:
    dis = instance.disutility
    total = travel_term
    for j in active:
        m = queue_metrics(instance.stations[j].queue, max(0.0, float(lam[j] + step * dlam[j])))
        total += dlam[j] * (dis.alpha * m.avg_wait + dis.beta * m.balk_prob)
    return total


def _line_search(instance: Instance, direction: np.ndarray, lam: np.ndarray, line_tol: float) -> float:
    """Exact step in [0, 1] by bisection on the directional derivative."""
    dlam = direction.sum(axis=0)
    travel_term = float(np.sum(instance.travel * direction))
    active = np.flatnonzero(dlam != 0)
    if _directional(instance, travel_term, lam, dlam, 1.0, active) <= 0:
        return 1.0
    if _directional(instance, travel_term, lam, dlam, 0.0, active) >= 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > line_tol:
        mid = 0.5 * (lo + hi)
        if _directional(instance, travel_term, lam, dlam, mid, active) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def solve_wardrop_fw(
    instance: Instance,
    open_set=None,
    tol: float = 1e-9,
    max_iter: int = 20000,
    line_tol: float = 1e-10,
    variant: str = "pairwise",
) -> EquilibriumSolution:
    """Frank-Wolfe on the deterministic (Wardrop) equilibrium program.

    Stops when the relative gap ``v.(y - z) / v.y`` falls below ``tol``,
    where ``z`` is the all-or-nothing assignment under the current costs.
    The ``classic`` variant moves toward ``z``; the ``pairwise`` variant moves,
    per demand node, the flow of its costliest used station to the station
    ``z`` picks, which removes the zig-zagging of the classic method.
    """
    if variant not in ("classic", "pairwise"):
        raise ValueError(f"unknown Frank-Wolfe variant {variant!r}")
    if instance.disutility.theta_inv != 0:
        raise ValueError("Frank-Wolfe solves the Wardrop program (theta_inv = 0)")
    mask = _as_mask(instance, open_set)
    if not mask.any():
        raise EquilibriumError("no station is open")
    d = instance.d
    rows = np.arange(instance.n_demands)

    def all_or_nothing(v):
        z = np.zeros_like(v)
        z[rows, np.argmin(v, axis=1)] = d
        return z

    flows = all_or_nothing(disutilities(instance, np.zeros(instance.n_stations), mask))
    rel_gap = math.inf
    for it in range(1, max_iter + 1):
        lam = flows.sum(axis=0)
        v = disutilities(instance, lam, mask)
        z = all_or_nothing(v)
        finite = np.where(np.isfinite(v), v, 0.0)
        vy = float(np.sum(finite * flows))
        gap = vy - float(np.sum(finite * z))
        rel_gap = gap / max(abs(vy), GAP_EPS)
        if rel_gap <= tol:
            return _finish(instance, flows, llp_objective(instance, flows), "frank-wolfe", mask,
                           iterations=it, residual=rel_gap)
        if variant == "classic":
            direction = z - flows
            flows = flows + _line_search(instance, direction, lam, line_tol) * direction
            continue
        for i in rows:
            v_i = disutilities(instance, flows.sum(axis=0), mask)[i]
            used = np.flatnonzero(flows[i] > 0)
            worst = used[np.argmax(v_i[used])]
            best = int(np.argmin(v_i))
            if v_i[worst] <= v_i[best]:
                continue
            direction = np.zeros_like(flows)
            direction[i, worst] = -flows[i, worst]
            direction[i, best] = flows[i, worst]
            flows = flows + _line_search(instance, direction, flows.sum(axis=0), line_tol) * direction
            flows[i, worst] = max(flows[i, worst], 0.0)
    sol = _finish(instance, flows, llp_objective(instance, flows), "frank-wolfe", mask,
                  iterations=max_iter, residual=rel_gap, converged=False)
    raise EquilibriumError(f"Frank-Wolfe did not converge in {max_iter} iterations (gap {rel_gap:.3g})",
                           rel_gap, sol)


@dataclass(frozen=True)
class ThroughputReport:
    per_station: np.ndarray
    ttr: float
    atr: float
    open_leaders: int


def true_throughput(solution: EquilibriumSolution, instance: Instance) -> ThroughputReport:
    """Leader throughput from the exact queue metrics at the equilibrium rates."""
    per_station = np.array([
        lam * (1.0 - queue_metrics(st.queue, max(0.0, float(lam))).balk_prob)
        for st, lam in zip(instance.stations, solution.lam)
    ])
    leaders = [j for j, st in enumerate(instance.stations) if st.is_leader and solution.open_mask[j]]
    ttr = float(per_station[leaders].sum()) if leaders else 0.0
    atr = ttr / len(leaders) if leaders else 0.0
    return ThroughputReport(per_station, ttr, atr, len(leaders))


def solution_to_json(solution: EquilibriumSolution, instance: Instance, flow_tol: float = 1e-12) -> dict:
    dids = [dm.id for dm in instance.demands]
    sids = instance.station_ids
    ii, jj = np.nonzero(solution.flows > flow_tol)
    report = true_throughput(solution, instance)
    doc = {
        "method": solution.method,
        "open": [sids[j] for j in np.flatnonzero(solution.open_mask)],
        "flows": [[dids[i], sids[j], float(solution.flows[i, j])] for i, j in zip(ii, jj)],
        "lambda": {sid: float(v) for sid, v in zip(sids, solution.lam)},
        "objective": solution.objective,
        "ttr": report.ttr,
        "atr": report.atr,
        "iterations": solution.iterations,
        "residual": solution.residual,
    }
    if solution.duals is not None:
        doc["duals"] = {k: v.tolist() for k, v in solution.duals.items()}
        doc["dual_objective"] = solution.dual_objective
    return doc


def write_solution(solution: EquilibriumSolution, instance: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(solution_to_json(solution, instance), indent=1) + "\n")
