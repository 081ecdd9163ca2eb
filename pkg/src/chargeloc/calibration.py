"""Grid-search calibration of the disutility weights against session counts."""
from __future__ import annotations

import csv
import io
import itertools
import json
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .equilibrium import solve_llp_lin
from .instance import Instance

SMOOTHING = 1e-12
REPORT_HEADER = ["rank", "alpha", "beta", "theta_inv", "kl"]


class CalibrationError(ValueError):
    pass


def kl_divergence(p: Sequence[float], q: Sequence[float], smoothing: float = SMOOTHING) -> float:
    """KL(P || Q) with ``0 ln 0 = 0``; Q is smoothed additively and renormalised."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise CalibrationError(f"share vectors must have the same length, got {p.shape} and {q.shape}")
    if np.any(p < 0) or np.any(q < 0) or p.sum() <= 0:
        raise CalibrationError("shares must be nonnegative and P must have positive mass")
    p = p / p.sum()
    q = q + smoothing
    q = q / q.sum()
    pos = p > 0
    return max(0.0, float(np.sum(p[pos] * np.log(p[pos] / q[pos]))))


def kl_by_station(observed: Mapping[str, float], predicted: Mapping[str, float],
                  smoothing: float = SMOOTHING) -> float:
    if set(observed) != set(predicted):
        raise CalibrationError("observed and predicted shares cover different stations")
    keys = sorted(observed)
    return kl_divergence([observed[k] for k in keys], [predicted[k] for k in keys], smoothing)


@dataclass(frozen=True)
class SessionsData:
    station_ids: tuple[str, ...]
    daily_sessions: np.ndarray  # mean sessions per day over the window
    n_days: int

    def __post_init__(self):
        if np.any(self.daily_sessions < 0):
            raise CalibrationError("session counts must be >= 0")
        if not np.any(self.daily_sessions > 0):
            raise CalibrationError("at least one station needs a positive session count")

    @property
    def shares(self) -> np.ndarray:
        return self.daily_sessions / self.daily_sessions.sum()


def sessions_from_rows(rows) -> SessionsData:
    totals: dict[str, float] = defaultdict(float)
    dates = set()
    for k, row in enumerate(rows):
        try:
            sid, date, count = row["station_id"], row["date"], float(row["sessions"])
        except (KeyError, TypeError, ValueError):
            raise CalibrationError(f"bad sessions row {k + 1}: {row}") from None
        if count < 0:
            raise CalibrationError(f"negative session count in row {k + 1}")
        totals[str(sid)] += count
        dates.add(date)
    if not totals:
        raise CalibrationError("sessions file has no rows")
    ids = tuple(sorted(totals))
    return SessionsData(ids, np.array([totals[i] / len(dates) for i in ids]), len(dates))


def load_sessions(path: str | Path) -> SessionsData:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"station_id", "date", "sessions"} - set(reader.fieldnames or [])
        if missing:
            raise CalibrationError(f"sessions CSV lacks columns {sorted(missing)}")
        return sessions_from_rows(list(reader))


def write_sessions(path: str | Path, station_ids: Sequence[str], daily: Sequence[float], dates: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station_id", "date", "sessions"])
        for date in dates:
            for sid, v in zip(station_ids, daily):
                w.writerow([sid, date, repr(float(v))])


@dataclass(frozen=True)
class GridSpec:
    alphas: tuple[float, ...]
    betas: tuple[float, ...]
    theta_invs: tuple[float, ...]

    def cells(self) -> list[tuple[float, float, float]]:
        return list(itertools.product(self.alphas, self.betas, self.theta_invs))

    @classmethod
    def standard(cls) -> "GridSpec":
        return cls(tuple(range(0, 51, 10)), tuple(range(0, 51, 10)), tuple(range(0, 6)))

    @classmethod
    def from_json(cls, doc: Mapping) -> "GridSpec":
        try:
            spec = cls(*(tuple(float(v) for v in doc[k]) for k in ("alpha", "beta", "theta_inv")))
        except (KeyError, TypeError, ValueError):
            raise CalibrationError("grid needs numeric lists 'alpha', 'beta' and 'theta_inv'") from None
        if not spec.alphas or not spec.betas or not spec.theta_invs:
            raise CalibrationError("grid lists must be non-empty")
        return spec

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """``standard``, a JSON file path, or ``alpha=0,10;beta=10;theta_inv=0``."""
        if text == "standard":
            return cls.standard()
        path = Path(text)
        if path.suffix == ".json" or path.exists():
            return cls.from_json(json.loads(path.read_text()))
        doc = {}
        for part in text.split(";"):
            key, _, vals = part.partition("=")
            doc[key.strip()] = [v for v in vals.split(",") if v.strip()]
        return cls.from_json(doc)


@dataclass(frozen=True)
class CellResult:
    index: int
    triplet: tuple[float, float, float]
    kl: float | None
    predicted: np.ndarray | None
    error: str | None = None


@dataclass(frozen=True)
class CalibrationResult:
    ranking: tuple[CellResult, ...]
    failures: tuple[CellResult, ...]
    observed: np.ndarray
    station_ids: tuple[str, ...]

    @property
    def best(self) -> CellResult:
        if not self.ranking:
            raise CalibrationError("every grid cell failed")
        return self.ranking[0]

    def report_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for rank, cell in enumerate(self.ranking, 1):
            a, b, t = cell.triplet
            w.writerow([rank, f"{a:g}", f"{b:g}", f"{t:g}", repr(cell.kl)])
        return buf.getvalue()


def predicted_shares(instance: Instance, station_ids: Sequence[str], backend: str = "highs") -> np.ndarray:
    sol = solve_llp_lin(instance, None, backend=backend)
    lam = np.array([sol.lam[instance.index_of(sid)] for sid in station_ids])
    lam = np.maximum(lam, 0.0)
    total = lam.sum()
    return lam / total if total > 0 else np.full(len(lam), 1.0 / len(lam))


def _evaluate_cell(args) -> CellResult:
    index, triplet, instance, station_ids, observed, backend = args
    try:
        pred = predicted_shares(instance.with_disutility(*triplet), station_ids, backend)
        return CellResult(index, triplet, kl_divergence(observed, pred), pred)
    except Exception as exc:  # recorded per cell, the search carries on
        return CellResult(index, triplet, None, None, f"{type(exc).__name__}: {exc}")


def grid_search(instance: Instance, sessions: SessionsData, grid: GridSpec, workers: int = 1,
                backend: str = "highs") -> CalibrationResult:
    """Score every triplet by KL(observed || predicted arrival shares)."""
    known = set(instance.station_ids)
    unknown = [sid for sid in sessions.station_ids if sid not in known]
    if unknown:
        raise CalibrationError(f"sessions reference unknown stations {unknown}")
    cells = grid.cells()
    if not cells:
        raise CalibrationError("empty calibration grid")
    tasks = [(k, tuple(float(v) for v in c), instance, sessions.station_ids, sessions.shares, backend)
             for k, c in enumerate(cells)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_cell, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_evaluate_cell(t) for t in tasks]
    ok = sorted((r for r in results if r.error is None), key=lambda r: (r.kl, r.index))
    failed = tuple(r for r in results if r.error is not None)
    return CalibrationResult(tuple(ok), failed, sessions.shares, sessions.station_ids)
