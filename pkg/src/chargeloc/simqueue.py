"""Discrete-event simulation of M/M/s/K and M/E_r/s/K queues with balking."""
from __future__ import annotations

import csv
import heapq
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .queueing import QueueSpec, mesk_metrics, mmsk_metrics, two_moment_capacity

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
CSV_HEADER = ["queue", "rho", "lambda", "p_analytic", "w_analytic", "p_sim", "p_sim_se", "w_sim", "w_sim_se"]


def splitmix64(state: int) -> int:
    z = (state + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def replication_seed(seed: int, k: int) -> int:
    return splitmix64((seed + k * GOLDEN_GAMMA) & MASK64)


@dataclass(frozen=True)
class SimConfig:
    spec: QueueSpec
    lam: float
    horizon: float = 1000.0
    warmup: float | None = None
    replications: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"arrival rate must be >= 0, got {self.lam}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.warmup is not None and self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if not self.horizon > self.effective_warmup:
            raise ValueError(f"horizon ({self.horizon}) must exceed warmup ({self.effective_warmup})")

    @property
    def effective_warmup(self) -> float:
        return 0.1 * self.horizon if self.warmup is None else self.warmup


@dataclass(frozen=True)
class ReplicationResult:
    arrivals: int
    balked: int
    admitted: int
    wait_sum: float
    time_full: float
    total_arrivals: int
    total_balked: int
    total_served: int
    in_system_end: int

    @property
    def balk_frac(self) -> float:
        return self.balked / self.arrivals if self.arrivals else 0.0

    @property
    def mean_wait(self) -> float:
        return self.wait_sum / self.admitted if self.admitted else math.nan


@dataclass(frozen=True)
class SimEstimate:
    balk_prob: float
    balk_prob_se: float
    avg_wait: float
    avg_wait_se: float
    arrivals: int
    balked: int
    time_full: float
    replications: tuple[ReplicationResult, ...] = field(repr=False, default=())


def _run_replication(spec: QueueSpec, lam: float, horizon: float, warmup: float, seed: int) -> ReplicationResult:
    if lam == 0.0:
        return ReplicationResult(0, 0, 0, 0.0, 0.0, 0, 0, 0, 0)
    rng = np.random.default_rng(seed)
    s, cap, r = spec.servers, spec.capacity, spec.erlang_shape
    phase_scale = 1.0 / (r * spec.service_rate)
    chunk = max(1024, int(lam * horizon * 0.25))

    # events keyed by (time, sequence); only departures need a queue because
    # arrivals are generated in time order
    departures: list[tuple[float, int]] = []
    free_at = [0.0] * s
    seq = 0
    in_system = 0
    t_prev = warmup
    time_full = 0.0

    arrivals = balked = admitted = 0
    wait_sum = 0.0
    total_arrivals = total_balked = 0

    t = 0.0
    gaps = rng.exponential(1.0 / lam, chunk)
    services = rng.gamma(r, phase_scale, chunk)
    idx = 0
    while True:
        if idx == chunk:
            gaps = rng.exponential(1.0 / lam, chunk)
            services = rng.gamma(r, phase_scale, chunk)
            idx = 0
        t += gaps[idx]
        service = services[idx]
        idx += 1
        if t >= horizon:
            break
        while departures and departures[0][0] <= t:
            dep, _ = heapq.heappop(departures)
            if in_system == cap and dep > warmup:
                time_full += dep - max(t_prev, warmup)
            t_prev = dep
            in_system -= 1
        counted = t >= warmup
        total_arrivals += 1
        if counted:
            arrivals += 1
        if in_system >= cap:
            total_balked += 1
            if counted:
                balked += 1
            continue
        start = max(t, heapq.heappop(free_at))
        finish = start + service
        heapq.heappush(free_at, finish)
        seq += 1
        heapq.heappush(departures, (finish, seq))
        if in_system + 1 == cap:
            t_prev = t
        in_system += 1
        if counted:
            admitted += 1
            wait_sum += finish - t
    # drain departures up to the horizon for the occupancy statistics
    while departures and departures[0][0] <= horizon:
        dep, _ = heapq.heappop(departures)
        if in_system == cap and dep > warmup:
            time_full += dep - max(t_prev, warmup)
        t_prev = dep
        in_system -= 1
    if in_system == cap:
        time_full += horizon - max(t_prev, warmup)
    served = total_arrivals - total_balked - in_system
    return ReplicationResult(
        arrivals=arrivals,
        balked=balked,
        admitted=admitted,
        wait_sum=wait_sum,
        time_full=time_full / (horizon - warmup),
        total_arrivals=total_arrivals,
        total_balked=total_balked,
        total_served=served,
        in_system_end=in_system,
    )


def _replication_task(args):
    return _run_replication(*args)


def _mean_se(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray([v for v in values if not math.isnan(v)], dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def simulate(config: SimConfig, workers: int = 1) -> SimEstimate:
    """Run independent replications and average their statistics.

    The waiting statistic is the sojourn time (arrival to service completion)
    of admitted users arriving after the warmup period.
    """
    warmup = config.effective_warmup
    tasks = [
        (config.spec, float(config.lam), float(config.horizon), warmup, replication_seed(config.seed, k))
        for k in range(config.replications)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(_replication_task, tasks))
    else:
        reps = [_run_replication(*task) for task in tasks]

    if config.lam == 0.0:
        return SimEstimate(0.0, 0.0, 1.0 / config.spec.service_rate, 0.0, 0, 0, 0.0, tuple(reps))
    p_mean, p_se = _mean_se([rep.balk_frac for rep in reps])
    w_mean, w_se = _mean_se([rep.mean_wait for rep in reps])
    full, _ = _mean_se([rep.time_full for rep in reps])
    return SimEstimate(
        balk_prob=p_mean,
        balk_prob_se=p_se,
        avg_wait=w_mean,
        avg_wait_se=w_se,
        arrivals=sum(rep.arrivals for rep in reps),
        balked=sum(rep.balked for rep in reps),
        time_full=full,
        replications=tuple(reps),
    )


@dataclass(frozen=True)
class QueueFamily:
    label: str
    spec: QueueSpec
    analytic: str  # "mmsk", "two_moment" or "none"


def comparison_families(buffer: int, total_rate: float = 40.0, servers: int = 2, erlang: int = 2) -> list[QueueFamily]:
    """The four queues compared at equal total service rate."""
    mu = total_rate / servers
    return [
        QueueFamily(f"M/M/1/{1 + buffer}", QueueSpec(1, 1 + buffer, total_rate), "mmsk"),
        QueueFamily(f"M/M/{servers}/{servers + buffer}", QueueSpec(servers, servers + buffer, mu), "mmsk"),
        QueueFamily(
            f"M/E{erlang}/{servers}/{servers + buffer}", QueueSpec(servers, servers + buffer, mu, erlang), "none"
        ),
        QueueFamily(
            f"M/M/{servers}/{servers + buffer}'", QueueSpec(servers, servers + buffer, mu, erlang), "two_moment"
        ),
    ]


@dataclass(frozen=True)
class SweepRow:
    queue: str
    rho: float
    lam: float
    p_analytic: float = math.nan
    w_analytic: float = math.nan
    p_sim: float = math.nan
    p_sim_se: float = math.nan
    w_sim: float = math.nan
    w_sim_se: float = math.nan
    effective_capacity: float = math.nan

    def as_csv(self) -> list[str]:
        def fmt(v: float) -> str:
            return "" if math.isnan(v) else repr(float(v))

        return [self.queue, fmt(self.rho), fmt(self.lam), fmt(self.p_analytic), fmt(self.w_analytic),
                fmt(self.p_sim), fmt(self.p_sim_se), fmt(self.w_sim), fmt(self.w_sim_se)]


def sweep(
    families: Iterable[QueueFamily],
    rhos: Sequence[float],
    *,
    simulate_labels: Iterable[str] | None = None,
    horizon: float = 500.0,
    replications: int = 30,
    seed: int = 0,
    workers: int = 1,
) -> list[SweepRow]:
    """Analytic and simulated metrics on a utilisation grid.

    ``rho`` is the arrival rate over the total service rate of the queue.
    By default only queues without a closed form are simulated.
    """
    families = list(families)
    rhos = list(rhos)
    if not rhos:
        raise ValueError("rho grid must be non-empty")
    if simulate_labels is None:
        simulate_labels = {f.label for f in families if f.analytic == "none"}
    simulate_labels = set(simulate_labels)

    rows = []
    for fi, fam in enumerate(families):
        for ri, rho in enumerate(rhos):
            lam = float(rho) * fam.spec.total_rate
            row = {"queue": fam.label, "rho": float(rho), "lam": lam}
            if fam.analytic == "mmsk":
                m = mmsk_metrics(QueueSpec(fam.spec.servers, fam.spec.capacity, fam.spec.service_rate), lam)
                row.update(p_analytic=m.balk_prob, w_analytic=m.avg_wait, effective_capacity=float(fam.spec.capacity))
            elif fam.analytic == "two_moment":
                m = mesk_metrics(fam.spec, lam)
                row.update(p_analytic=m.balk_prob, w_analytic=m.avg_wait,
                           effective_capacity=two_moment_capacity(fam.spec, lam))
            if fam.label in simulate_labels:
                cfg = SimConfig(fam.spec, lam, horizon=horizon, replications=replications,
                                seed=replication_seed(seed, 1000 * fi + ri))
                est = simulate(cfg, workers=workers)
                row.update(p_sim=est.balk_prob, p_sim_se=est.balk_prob_se, w_sim=est.avg_wait, w_sim_se=est.avg_wait_se)
            rows.append(SweepRow(**row))
    return rows


def rows_to_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.as_csv())
    return buf.getvalue()
