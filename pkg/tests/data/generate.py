"""Regenerate the bundled test instances: ``python tests/data/generate.py``."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from chargeloc.calibration import predicted_shares, write_sessions
from chargeloc.instance import instance_from_json
from chargeloc.synth import dumps, synth_city

HERE = Path(__file__).resolve().parent


def _doc(name, demands, stations, disutility, n_points):
    return {"schema": 1, "name": name, "demands": demands, "stations": stations,
            "travel": {"mode": "euclidean", "speed_kmh": 30.0},
            "disutility": dict(zip(("alpha", "beta", "theta_inv"), disutility)),
            "grid": {"n_points": n_points}}


def tiny():
    # 6 demand nodes, 4 leader candidates, one fixed leader, two competitors
    rng = np.random.default_rng(3)
    dem = [{"id": f"d{i}", "x": float(rng.uniform(0, 10)), "y": float(rng.uniform(0, 10)),
            "d": float(rng.uniform(5, 15))} for i in range(6)]
    sts = []
    for j in range(7):
        sts.append({"id": f"s{j}", "owner": "competitor" if j >= 5 else "leader",
                    "status": "candidate" if j < 4 else "fixed_open",
                    "s": int(rng.choice([1, 2])), "K": 3, "mu": float(rng.choice([9.0, 20.0])),
                    "x": float(rng.uniform(0, 10)), "y": float(rng.uniform(0, 10))})
    return _doc("tiny", dem, sts, (1.0, 10.0, 0.0), 25)


def congested():
    # multi-server stations with a two-slot buffer; demand well above capacity
    rng = np.random.default_rng(28)
    dem = [{"id": f"d{i}", "x": round(float(rng.uniform(0, 30)), 3), "y": round(float(rng.uniform(0, 30)), 3),
            "d": round(float(rng.uniform(5, 20)), 3)} for i in range(6)]
    sts = []
    for j in range(6):
        s = int(rng.choice([1, 2, 4]))
        sts.append({"id": f"s{j}", "owner": "competitor" if j == 5 else "leader",
                    "status": "candidate" if j < 4 else "fixed_open", "s": s, "K": s + 2,
                    "mu": float(rng.choice([9.0, 20.0])),
                    "x": round(float(rng.uniform(0, 30)), 3), "y": round(float(rng.uniform(0, 30)), 3)})
    return _doc("congested", dem, sts, (0.0, 10.0, 0.0), 25)


def three_by_three(seed):
    rng = np.random.default_rng(seed)
    dem = [{"id": f"d{i}", "x": float(rng.uniform(0, 10)), "y": float(rng.uniform(0, 10)),
            "d": float(rng.uniform(10, 30))} for i in range(3)]
    sts = [{"id": f"s{j}", "owner": "leader", "status": "fixed_open", "s": 2, "K": 4, "mu": 9.0,
            "x": float(rng.uniform(0, 10)), "y": float(rng.uniform(0, 10))} for j in range(3)]
    return _doc(f"grid3x3_seed{seed}", dem, sts, (10.0, 10.0, 0.0), 100)


def main():
    (HERE / "tiny.json").write_text(dumps(tiny()))
    (HERE / "congested.json").write_text(dumps(congested()))
    for seed in (1, 2, 3):
        (HERE / f"grid3x3_seed{seed}.json").write_text(dumps(three_by_three(seed)))
    (HERE / "tiny_scenario.json").write_text(json.dumps(
        {"instance": "tiny.json", "budget": 2, "encoding": "bigM", "sos2": "binary", "time_limit": 600,
         "backend": "highs", "model": "linearization"}, indent=1) + "\n")

    calib = synth_city(12, 5, seed=1, size_km=150.0, n_points=50)
    (HERE / "calib.json").write_text(dumps(calib))
    inst = instance_from_json(calib).with_disutility(0.0, 10.0, 0.0)
    shares = predicted_shares(inst, inst.station_ids)
    dates = [f"2024-01-{k:02d}" for k in range(1, 31)]
    write_sessions(HERE / "calib_sessions.csv", inst.station_ids, 100.0 * shares, dates)


if __name__ == "__main__":
    main()
