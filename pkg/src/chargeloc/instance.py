"""Planning instances: demand nodes, stations, travel times and grids."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import jsonschema
import numpy as np

from .queueing import QueueSpec

DEMAND_FACTOR = 0.003
DEFAULT_SPEED_KMH = 30.0
SCHEMA_VERSION = 1

LEADER, COMPETITOR = "leader", "competitor"
FIXED_OPEN, CANDIDATE = "fixed_open", "candidate"


class InstanceError(ValueError):
    """Invalid instance data; ``pointer`` locates the offending field."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer}: {message}" if pointer else message)
        self.pointer = pointer


@dataclass(frozen=True)
class Demand:
    id: str
    d: float
    x: float | None = None
    y: float | None = None
    population: float | None = None


@dataclass(frozen=True)
class Station:
    id: str
    owner: str
    status: str
    queue: QueueSpec
    x: float | None = None
    y: float | None = None

    @property
    def is_leader(self) -> bool:
        return self.owner == LEADER

    @property
    def is_candidate(self) -> bool:
        return self.status == CANDIDATE


@dataclass(frozen=True)
class Disutility:
    alpha: float = 0.0
    beta: float = 0.0
    theta_inv: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta", "theta_inv"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InstanceError(f"{name} must be finite and >= 0, got {v}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.theta_inv)


def demand_grid(d: np.ndarray, n: int) -> np.ndarray:
    """n points evenly spaced in (0, max d]."""
    top = float(np.max(d))
    return top * np.arange(1, n + 1) / n


def rate_grid(d: np.ndarray, n: int) -> np.ndarray:
    """n points evenly spaced in [0, sum d]."""
    return np.linspace(0.0, float(np.sum(d)), n)


@dataclass(frozen=True, eq=False)
class Instance:
    demands: tuple[Demand, ...]
    stations: tuple[Station, ...]
    travel: np.ndarray
    disutility: Disutility
    n_points: int = 100
    name: str = "instance"
    meta: Mapping[str, Any] = field(default_factory=dict)

    @property
    def d(self) -> np.ndarray:
        return np.array([dm.d for dm in self.demands], dtype=float)

    @property
    def n_demands(self) -> int:
        return len(self.demands)

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    @property
    def y_grid(self) -> np.ndarray:
        return demand_grid(self.d, self.n_points)

    @property
    def lam_grid(self) -> np.ndarray:
        return rate_grid(self.d, self.n_points)

    @property
    def station_ids(self) -> list[str]:
        return [st.id for st in self.stations]

    def index_of(self, station_id: str) -> int:
        try:
            return self.station_ids.index(station_id)
        except ValueError:
            raise InstanceError(f"unknown station id {station_id!r}") from None

    @property
    def leader_idx(self) -> np.ndarray:
        return np.array([k for k, st in enumerate(self.stations) if st.is_leader], dtype=int)

    @property
    def candidate_idx(self) -> np.ndarray:
        return np.array([k for k, st in enumerate(self.stations) if st.is_candidate], dtype=int)

    @property
    def fixed_idx(self) -> np.ndarray:
        return np.array([k for k, st in enumerate(self.stations) if not st.is_candidate], dtype=int)

    def open_mask(self, open_candidates: Iterable[str | int] | None = None) -> np.ndarray:
        """Boolean mask over stations; ``None`` opens every candidate."""
        mask = np.array([not st.is_candidate for st in self.stations])
        if open_candidates is None:
            return np.ones(self.n_stations, dtype=bool)
        for key in open_candidates:
            k = self.index_of(key) if isinstance(key, str) else int(key)
            if not self.stations[k].is_candidate:
                raise InstanceError(f"station {self.stations[k].id!r} is not a candidate")
            mask[k] = True
        return mask

    def with_disutility(self, alpha: float, beta: float, theta_inv: float) -> "Instance":
        return replace(self, disutility=Disutility(alpha, beta, theta_inv))

    def with_points(self, n_points: int) -> "Instance":
        return replace(self, n_points=int(n_points))

    def with_queues(self, fn) -> "Instance":
        """Apply ``fn(station) -> QueueSpec`` to every station."""
        return replace(self, stations=tuple(replace(st, queue=fn(st)) for st in self.stations))

    def to_json(self) -> dict:
        demands = []
        for dm in self.demands:
            rec = {"id": dm.id, "x": dm.x, "y": dm.y, "d": dm.d}
            if dm.population is not None:
                rec["population"] = dm.population
            demands.append(rec)
        stations = [
            {"id": st.id, "owner": st.owner, "status": st.status, "s": st.queue.servers,
             "K": st.queue.capacity, "mu": st.queue.service_rate, "r": st.queue.erlang_shape,
             "x": st.x, "y": st.y}
            for st in self.stations
        ]
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "demands": demands,
            "stations": stations,
            "travel": {"mode": "matrix", "matrix": self.travel.tolist()},
            "disutility": {"alpha": self.disutility.alpha, "beta": self.disutility.beta,
                           "theta_inv": self.disutility.theta_inv},
            "grid": {"n_points": self.n_points},
        }


def euclidean_travel(demand_xy: np.ndarray, station_xy: np.ndarray, speed_kmh: float) -> np.ndarray:
    diff = demand_xy[:, None, :] - station_xy[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1]) / speed_kmh


def build_instance(
    demands: Sequence[Mapping[str, Any]],
    stations: Sequence[Mapping[str, Any]],
    disutility: Disutility | Mapping[str, float] = Disutility(),
    n_points: int = 100,
    travel: np.ndarray | Sequence[Sequence[float]] | None = None,
    speed_kmh: float = DEFAULT_SPEED_KMH,
    demand_factor: float = DEMAND_FACTOR,
    name: str = "instance",
) -> Instance:
    """Assemble and validate an :class:`Instance` from plain records.

    Demand records carry ``d`` or ``population`` (scaled by ``demand_factor``).
    Station records carry ``s``, ``K``, ``mu`` and optionally ``r``.  Without a
    travel matrix, coordinates are planar km and times are in hours.
    """
    if not demands:
        raise InstanceError("at least one demand node is required", "/demands")
    if not stations:
        raise InstanceError("at least one station is required", "/stations")
    if n_points < 2:
        raise InstanceError("grid needs at least 2 points", "/grid/n_points")

    dms = []
    for k, rec in enumerate(demands):
        ptr = f"/demands/{k}"
        pop = rec.get("population")
        d = rec.get("d")
        if d is None:
            if pop is None:
                raise InstanceError("needs d or population", ptr)
            d = float(pop) * demand_factor
        d = float(d)
        if not (d > 0 and math.isfinite(d)):
            raise InstanceError(f"demand must be positive, got {d}", ptr + "/d")
        dms.append(Demand(str(rec["id"]), d, _opt(rec.get("x")), _opt(rec.get("y")), _opt(pop)))

    sts = []
    for k, rec in enumerate(stations):
        ptr = f"/stations/{k}"
        owner = rec.get("owner", LEADER)
        status = rec.get("status", FIXED_OPEN)
        if owner not in (LEADER, COMPETITOR):
            raise InstanceError(f"owner must be leader or competitor, got {owner!r}", ptr + "/owner")
        if status not in (FIXED_OPEN, CANDIDATE):
            raise InstanceError(f"status must be fixed_open or candidate, got {status!r}", ptr + "/status")
        if owner == COMPETITOR and status != FIXED_OPEN:
            raise InstanceError("competitor stations must be fixed_open", ptr + "/status")
        try:
            spec = QueueSpec(int(rec["s"]), int(rec["K"]), float(rec["mu"]), int(rec.get("r", 1)))
        except (KeyError, ValueError) as exc:
            raise InstanceError(str(exc), ptr) from None
        sts.append(Station(str(rec["id"]), owner, status, spec, _opt(rec.get("x")), _opt(rec.get("y"))))

    for label, ids in (("demands", [dm.id for dm in dms]), ("stations", [st.id for st in sts])):
        if len(set(ids)) != len(ids):
            raise InstanceError("ids must be unique", f"/{label}")

    if travel is None:
        if any(v is None for dm in dms for v in (dm.x, dm.y)) or any(v is None for st in sts for v in (st.x, st.y)):
            raise InstanceError("no travel matrix and some coordinates are missing", "/travel")
        if not speed_kmh > 0:
            raise InstanceError("speed must be positive", "/travel/speed_kmh")
        t = euclidean_travel(np.array([[dm.x, dm.y] for dm in dms]),
                             np.array([[st.x, st.y] for st in sts]), speed_kmh)
    else:
        t = np.array(travel, dtype=float)
        if t.shape != (len(dms), len(sts)):
            raise InstanceError(f"travel matrix shape {t.shape} != ({len(dms)}, {len(sts)})", "/travel/matrix")
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise InstanceError("travel times must be finite and >= 0", "/travel")

    if not isinstance(disutility, Disutility):
        disutility = Disutility(float(disutility.get("alpha", 0.0)), float(disutility.get("beta", 0.0)),
                                float(disutility.get("theta_inv", 0.0)))
    t.setflags(write=False)
    return Instance(tuple(dms), tuple(sts), t, disutility, int(n_points), name)


def _opt(v):
    return None if v is None else float(v)


_NUM = {"type": "number"}
INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["schema", "demands", "stations"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "demands": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "required": ["id"],
                "properties": {
                    "id": {"type": ["string", "integer"]},
                    "x": {"type": ["number", "null"]}, "y": {"type": ["number", "null"]},
                    "population": {"type": "number", "minimum": 0},
                    "d": {"type": "number", "exclusiveMinimum": 0},
                },
                "anyOf": [{"required": ["d"]}, {"required": ["population"]}],
            },
        },
        "stations": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "required": ["id", "s", "K", "mu"],
                "properties": {
                    "id": {"type": ["string", "integer"]},
                    "owner": {"enum": [LEADER, COMPETITOR]},
                    "status": {"enum": [FIXED_OPEN, CANDIDATE]},
                    "s": {"type": "integer", "minimum": 1},
                    "K": {"type": "integer", "minimum": 1},
                    "mu": {"type": "number", "exclusiveMinimum": 0},
                    "r": {"type": "integer", "minimum": 1},
                    "x": {"type": ["number", "null"]}, "y": {"type": ["number", "null"]},
                },
            },
        },
        "travel": {
            "type": "object", "required": ["mode"],
            "properties": {
                "mode": {"enum": ["euclidean", "matrix"]},
                "speed_kmh": {"type": "number", "exclusiveMinimum": 0},
                "matrix": {"type": "array", "items": {"type": "array", "items": _NUM}},
            },
        },
        "disutility": {
            "type": "object",
            "properties": {k: {"type": "number", "minimum": 0} for k in ("alpha", "beta", "theta_inv")},
        },
        "grid": {"type": "object", "properties": {"n_points": {"type": "integer", "minimum": 2}}},
    },
}


def json_pointer(path: Iterable) -> str:
    parts = [str(p).replace("~", "~0").replace("/", "~1") for p in path]
    return "/" + "/".join(parts) if parts else ""


def instance_from_json(doc: Mapping[str, Any], n_points: int | None = None) -> Instance:
    validator = jsonschema.Draft202012Validator(INSTANCE_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise InstanceError(err.message, json_pointer(err.absolute_path) or "/")
    travel = doc.get("travel", {"mode": "euclidean"})
    matrix = travel.get("matrix") if travel["mode"] == "matrix" else None
    if travel["mode"] == "matrix" and matrix is None:
        raise InstanceError("matrix mode needs a matrix", "/travel/matrix")
    grid_n = n_points if n_points is not None else doc.get("grid", {}).get("n_points", 100)
    return build_instance(
        doc["demands"], doc["stations"], doc.get("disutility", {}), grid_n,
        travel=matrix, speed_kmh=travel.get("speed_kmh", DEFAULT_SPEED_KMH), name=doc.get("name", "instance"),
    )


def load_instance(path: str | Path, n_points: int | None = None) -> Instance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return instance_from_json(doc, n_points)


def save_instance(instance: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance.to_json(), indent=1, sort_keys=True) + "\n")
