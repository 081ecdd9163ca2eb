"""Reproducible synthetic cities standing in for proprietary demand data."""
from __future__ import annotations

import json

import numpy as np

from .instance import CANDIDATE, COMPETITOR, DEFAULT_SPEED_KMH, DEMAND_FACTOR, FIXED_OPEN, LEADER, SCHEMA_VERSION

SERVICE_RATES = (9.0, 58.0)  # users per day for slow and fast chargers


def synth_city(
    n_demands: int,
    n_stations: int,
    seed: int = 0,
    n_competitors: int = 0,
    n_candidates: int = 0,
    buffer: int = 0,
    size_km: float = 20.0,
    n_points: int = 100,
    disutility: tuple[float, float, float] = (0.0, 10.0, 0.0),
) -> dict:
    """Instance document with clustered demand nodes and mixed chargers.

    Populations are drawn per node and turned into daily demand with the
    uniform demand factor.  The first ``n_candidates`` stations are leader
    candidates and the last ``n_competitors`` belong to the competitor.
    """
    if n_demands < 1 or n_stations < 1:
        raise ValueError("need at least one demand node and one station")
    if n_competitors + n_candidates > n_stations:
        raise ValueError("candidates and competitors exceed the number of stations")
    rng = np.random.default_rng(seed)
    n_clusters = max(1, n_demands // 8)
    centres = rng.uniform(0.15 * size_km, 0.85 * size_km, (n_clusters, 2))
    which = rng.integers(0, n_clusters, n_demands)
    pts = np.clip(centres[which] + rng.normal(0.0, 0.08 * size_km, (n_demands, 2)), 0.0, size_km)
    pops = rng.integers(1000, 8000, n_demands)

    st_xy = np.clip(centres[rng.integers(0, n_clusters, n_stations)]
                    + rng.normal(0.0, 0.15 * size_km, (n_stations, 2)), 0.0, size_km)
    mu = rng.choice(SERVICE_RATES, n_stations)
    servers = rng.integers(1, 4, n_stations)

    demands = [
        {"id": f"d{i}", "x": round(float(pts[i, 0]), 6), "y": round(float(pts[i, 1]), 6),
         "population": int(pops[i]), "d": round(float(pops[i]) * DEMAND_FACTOR, 9)}
        for i in range(n_demands)
    ]
    stations = []
    for j in range(n_stations):
        owner = COMPETITOR if j >= n_stations - n_competitors else LEADER
        status = CANDIDATE if j < n_candidates else FIXED_OPEN
        stations.append({
            "id": f"s{j}", "owner": owner, "status": status,
            "s": int(servers[j]), "K": int(servers[j]) + int(buffer), "mu": float(mu[j]), "r": 1,
            "x": round(float(st_xy[j, 0]), 6), "y": round(float(st_xy[j, 1]), 6),
        })
    alpha, beta, theta_inv = disutility
    return {
        "schema": SCHEMA_VERSION,
        "name": f"synth_{n_demands}x{n_stations}_seed{seed}",
        "demands": demands,
        "stations": stations,
        "travel": {"mode": "euclidean", "speed_kmh": DEFAULT_SPEED_KMH},
        "disutility": {"alpha": alpha, "beta": beta, "theta_inv": theta_inv},
        "grid": {"n_points": n_points},
    }


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"
