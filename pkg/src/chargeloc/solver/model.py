"""Solver-agnostic description of LP/MILP models and their solutions."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

INF = float("inf")
_NAME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")


class ModelError(ValueError):
    """Malformed model or an unsupported construct for a format/backend."""


@dataclass(frozen=True)
class Sos2:
    name: str
    members: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class Indicator:
    """``binary == active`` implies ``coeffs . x  sense  rhs``."""

    name: str
    binary: int
    active: int
    cols: np.ndarray
    coeffs: np.ndarray
    sense: str
    rhs: float


@dataclass
class MilpModel:
    name: str
    var_names: list[str]
    lb: np.ndarray
    ub: np.ndarray
    vtype: np.ndarray  # 'C', 'B' or 'I'
    obj: np.ndarray
    sense: str  # 'min' or 'max'
    A: sparse.csr_matrix
    row_names: list[str]
    row_sense: np.ndarray  # '<', '>' or '='
    rhs: np.ndarray
    obj_const: float = 0.0
    sos2: list[Sos2] = field(default_factory=list)
    indicators: list[Indicator] = field(default_factory=list)
    var_groups: dict[str, np.ndarray] = field(default_factory=dict)
    row_groups: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    @property
    def num_rows(self) -> int:
        return len(self.row_names)

    @property
    def is_mip(self) -> bool:
        return bool(np.any(self.vtype != "C")) or bool(self.sos2) or bool(self.indicators)

    def validate(self) -> None:
        n, m = self.num_vars, self.num_rows
        for label, arr in (("lb", self.lb), ("ub", self.ub), ("vtype", self.vtype), ("obj", self.obj)):
            if len(arr) != n:
                raise ModelError(f"{label} has length {len(arr)}, expected {n}")
        if self.A.shape != (m, n):
            raise ModelError(f"constraint matrix shape {self.A.shape} != ({m}, {n})")
        if len(self.row_sense) != m or len(self.rhs) != m:
            raise ModelError("row_sense/rhs length mismatch")
        if not set(np.unique(self.row_sense)) <= {"<", ">", "="}:
            raise ModelError("row senses must be '<', '>' or '='")
        if not set(np.unique(self.vtype)) <= {"C", "B", "I"}:
            raise ModelError("variable types must be 'C', 'B' or 'I'")
        if self.sense not in ("min", "max"):
            raise ModelError(f"objective sense must be 'min' or 'max', got {self.sense!r}")
        if np.any(self.lb > self.ub):
            bad = int(np.argmax(self.lb > self.ub))
            raise ModelError(f"variable {self.var_names[bad]} has lb > ub")
        names = self.var_names + self.row_names
        if len(set(names)) != len(names):
            raise ModelError("variable and row names must be unique")
        for nm in names:
            if not _NAME_RE.match(nm):
                raise ModelError(f"invalid name {nm!r}")
        for sos in self.sos2:
            if np.any(sos.members < 0) or np.any(sos.members >= n):
                raise ModelError(f"SOS2 {sos.name} references undeclared variables")
            if len(sos.members) != len(sos.weights) or np.any(np.diff(sos.weights) <= 0):
                raise ModelError(f"SOS2 {sos.name} needs strictly increasing weights")
        for ind in self.indicators:
            if not 0 <= ind.binary < n or self.vtype[ind.binary] != "B":
                raise ModelError(f"indicator {ind.name} must reference a binary variable")
            if np.any(ind.cols < 0) or np.any(ind.cols >= n):
                raise ModelError(f"indicator {ind.name} references undeclared variables")
            if ind.sense not in ("<", ">", "="):
                raise ModelError(f"indicator {ind.name} has bad sense {ind.sense!r}")

    def group_values(self, values: np.ndarray, group: str) -> np.ndarray:
        return values[self.var_groups[group]]

    def objective_value(self, values: np.ndarray) -> float:
        return float(self.obj @ values + self.obj_const)


class ModelBuilder:
    """Incremental, vectorised assembly of a :class:`MilpModel`."""

    def __init__(self, name: str):
        self.name = name
        self._names: list[str] = []
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._vtype: list[np.ndarray] = []
        self._obj: list[np.ndarray] = []
        self._rows_i: list[np.ndarray] = []
        self._rows_j: list[np.ndarray] = []
        self._rows_v: list[np.ndarray] = []
        self._row_names: list[str] = []
        self._row_sense: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self.var_groups: dict[str, np.ndarray] = {}
        self.row_groups: dict[str, np.ndarray] = {}
        self.sos2: list[Sos2] = []
        self.indicators: list[Indicator] = []
        self.n = 0
        self.m = 0

    def add_vars(self, group: str, shape, lb=0.0, ub=INF, vtype: str = "C", obj=0.0) -> np.ndarray:
        """Add an array of variables named ``group_i_j...``; returns their indices."""
        shape = tuple(np.atleast_1d(shape).tolist()) if not isinstance(shape, tuple) else shape
        count = int(np.prod(shape)) if shape else 1
        idx = np.arange(self.n, self.n + count).reshape(shape)
        for multi in np.ndindex(*shape):
            self._names.append("_".join([group, *map(str, multi)]) if multi else group)
        self._lb.append(np.broadcast_to(np.asarray(lb, float), shape).ravel().copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, float), shape).ravel().copy())
        self._vtype.append(np.full(count, vtype))
        self._obj.append(np.broadcast_to(np.asarray(obj, float), shape).ravel().copy())
        self.var_groups[group] = idx
        self.n += count
        return idx

    def add_rows(self, group: str, count: int, rows: Sequence[int], cols: Sequence[int], vals: Sequence[float],
                 sense, rhs, names: Sequence[str] | None = None) -> np.ndarray:
        """Add ``count`` rows from local (row, col, value) triplets."""
        rows = np.asarray(rows, dtype=np.int64)
        if count and rows.size and (rows.min() < 0 or rows.max() >= count):
            raise ModelError(f"row index out of range in group {group}")
        idx = np.arange(self.m, self.m + count)
        self._rows_i.append(rows + self.m)
        self._rows_j.append(np.asarray(cols, dtype=np.int64))
        self._rows_v.append(np.asarray(vals, dtype=float))
        self._row_sense.append(np.broadcast_to(np.asarray(sense), (count,)).copy())
        self._rhs.append(np.broadcast_to(np.asarray(rhs, float), (count,)).copy())
        if names is None:
            names = [f"{group}_{k}" for k in range(count)]
        self._row_names.extend(names)
        self.row_groups[group] = idx
        self.m += count
        return idx

    def add_sos2(self, name: str, members: Sequence[int], weights: Sequence[float]) -> None:
        self.sos2.append(Sos2(name, np.asarray(members, dtype=np.int64), np.asarray(weights, dtype=float)))

    def add_indicator(self, name: str, binary: int, active: int, cols, coeffs, sense: str, rhs: float) -> None:
        self.indicators.append(
            Indicator(name, int(binary), int(active), np.asarray(cols, dtype=np.int64),
                      np.asarray(coeffs, dtype=float), sense, float(rhs))
        )

    def build(self, obj_sense: str = "min", obj_const: float = 0.0) -> MilpModel:
        cat = (lambda parts, dtype=float: np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype))
        A = sparse.coo_matrix(
            (cat(self._rows_v), (cat(self._rows_i, np.int64), cat(self._rows_j, np.int64))),
            shape=(self.m, self.n),
        ).tocsr()
        A.sum_duplicates()
        model = MilpModel(
            name=self.name,
            var_names=list(self._names),
            lb=cat(self._lb),
            ub=cat(self._ub),
            vtype=cat(self._vtype, object).astype("<U1") if self._vtype else np.zeros(0, "<U1"),
            obj=cat(self._obj),
            sense=obj_sense,
            A=A,
            row_names=list(self._row_names),
            row_sense=cat(self._row_sense, object).astype("<U1") if self._row_sense else np.zeros(0, "<U1"),
            rhs=cat(self._rhs),
            obj_const=obj_const,
            sos2=list(self.sos2),
            indicators=list(self.indicators),
            var_groups=dict(self.var_groups),
            row_groups=dict(self.row_groups),
        )
        model.validate()
        return model


@dataclass(frozen=True)
class BackendCapability:
    id: str
    supports_indicator: bool
    supports_sos2: bool
    supports_duals_lp: bool


@dataclass(frozen=True)
class SolverOptions:
    time_limit: float = 3600.0
    threads: int | None = None
    mip_gap: float = 1e-6
    feasibility_tol: float = 1e-7


OPTIMAL = "optimal"
FEASIBLE_TIMEOUT = "feasible_timeout"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
TIMEOUT_NO_SOLUTION = "timeout"
ERROR = "error"


@dataclass
class SolveReport:
    status: str
    objective: float | None = None
    values: np.ndarray | None = None
    duals: np.ndarray | None = None
    bound: float | None = None
    gap: float | None = None
    wall_time: float = 0.0
    backend: str = ""
    message: str = ""

    @property
    def has_solution(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE_TIMEOUT) and self.values is not None


def relative_gap(objective: float, bound: float | None, sense: str, eps: float = 1e-9) -> float | None:
    """Nonnegative optimality gap; the bound is above the incumbent when maximising."""
    if bound is None or objective is None or not np.isfinite(bound):
        return None
    diff = bound - objective if sense == "max" else objective - bound
    return max(0.0, diff) / max(abs(bound), eps)


