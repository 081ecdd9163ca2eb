"""Steady-state metrics of finite-capacity Markovian queues.

A station is an ``M/M/s/K`` queue: Poisson arrivals at rate ``lam``, ``s``
identical exponential servers of rate ``mu`` each and room for ``K`` users in
total (servers plus parking spots).  Arrivals that find ``K`` users balk.
Erlang-r service is handled through the two-moment effective-capacity
surrogate ``M/M/s/K'`` with a real-valued ``K'``.

All probabilities are evaluated in log space so large ``s``/``K`` or heavy
load never overflow the factorials.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.integrate import quad_vec

RHO_ONE_RTOL = 1e-12


class QueueError(ValueError):
    """Invalid queue parameters or a breakdown of an approximation."""


@dataclass(frozen=True)
class QueueSpec:
    servers: int
    capacity: int
    service_rate: float
    erlang_shape: int = 1

    def __post_init__(self):
        if int(self.servers) != self.servers or self.servers < 1:
            raise QueueError(f"servers must be a positive integer, got {self.servers}")
        if int(self.capacity) != self.capacity or self.capacity < self.servers:
            raise QueueError(
                f"capacity must be an integer >= servers ({self.servers}), got {self.capacity}"
            )
        if not self.service_rate > 0 or not math.isfinite(self.service_rate):
            raise QueueError(f"service_rate must be positive, got {self.service_rate}")
        if int(self.erlang_shape) != self.erlang_shape or self.erlang_shape < 1:
            raise QueueError(f"erlang_shape must be a positive integer, got {self.erlang_shape}")

    @property
    def buffer(self) -> int:
        return self.capacity - self.servers

    @property
    def total_rate(self) -> float:
        return self.servers * self.service_rate

    def label(self) -> str:
        service = "M" if self.erlang_shape == 1 else f"E{self.erlang_shape}"
        return f"M/{service}/{self.servers}/{self.capacity}"


@dataclass(frozen=True)
class QueueMetrics:
    balk_prob: float
    avg_wait: float
    avg_in_system: float
    state_probs: np.ndarray
    effective_capacity: float

    @property
    def throughput_fraction(self) -> float:
        return 1.0 - self.balk_prob


def _check_rate(lam: float) -> float:
    lam = float(lam)
    if not lam >= 0 or not math.isfinite(lam):
        raise QueueError(f"arrival rate must be finite and >= 0, got {lam}")
    return lam


def _is_critical(lam: float, s: int, mu: float) -> bool:
    return abs(lam - s * mu) <= RHO_ONE_RTOL * s * mu


def _log_geom(log_rho: float, n: float, critical: bool) -> float:
    """log of sum_{k=0}^{n-1} rho^k for real n > 0 (closed form)."""
    if critical:
        return math.log(n)
    if log_rho > 0:
        nu = n * log_rho
        if nu > 700:
            return nu + math.log1p(-math.exp(-nu)) - math.log(math.expm1(log_rho))
        return math.log(math.expm1(nu)) - math.log(math.expm1(log_rho))
    return math.log(-math.expm1(n * log_rho)) - math.log(-math.expm1(log_rho))


def _weighted_geom(log_rho: float, n: float, critical: bool) -> float:
    """sum_{k=0}^{n-1} k rho^k for real n, continued analytically in n."""
    if critical or abs(log_rho) * n < 1e-3:
        u = 0.0 if critical else log_rho
        s1 = n * (n - 1) / 2
        s2 = (n - 1) * n * (2 * n - 1) / 6
        s3 = s1 * s1
        return s1 + u * s2 + 0.5 * u * u * s3
    u = log_rho
    em1 = math.expm1(u)
    return (n * math.exp(n * u) * em1 - math.expm1(n * u) * math.exp(u)) / (em1 * em1)


def _head_log_terms(s: int, log_a: float) -> list[float]:
    # term_{m+1} = term_m * a / (m + 1), kept in log space
    terms = [0.0]
    for m in range(1, s):
        terms.append(terms[-1] + log_a - math.log(m))
    return terms


def _log_norm(s: int, cap: float, lam: float, mu: float) -> tuple[float, list[float], float, float, bool]:
    a = lam / mu
    log_a = math.log(a)
    log_rho = log_a - math.log(s)
    critical = _is_critical(lam, s, mu)
    head = _head_log_terms(s, log_a)
    log_c = s * log_a - math.lgamma(s + 1)
    tail = log_c + _log_geom(log_rho, cap - s + 1, critical)
    peak = max(max(head), tail)
    log_z = peak + math.log(sum(math.exp(t - peak) for t in head) + math.exp(tail - peak))
    return log_z, head, log_c, log_rho, critical


def _log_term(n: float, s: int, head: list[float], log_c: float, log_rho: float) -> float:
    if n < s:
        return head[int(n)]
    return log_c + (n - s) * log_rho


def mmsk_state_probs(spec: QueueSpec, lam: float) -> np.ndarray:
    """Probabilities of 0..K users in an M/M/s/K system."""
    if spec.erlang_shape != 1:
        raise QueueError("mmsk_state_probs needs exponential service (erlang_shape=1)")
    lam = _check_rate(lam)
    return _state_probs(spec.servers, spec.capacity, lam, spec.service_rate)


def _state_probs(s: int, cap: float, lam: float, mu: float) -> np.ndarray:
    top = int(math.floor(cap + 1e-12))
    probs = np.zeros(top + 1)
    if lam == 0.0:
        probs[0] = 1.0
        return probs
    log_z, head, log_c, log_rho, _ = _log_norm(s, cap, lam, mu)
    for n in range(top + 1):
        probs[n] = math.exp(_log_term(n, s, head, log_c, log_rho) - log_z)
    return probs


def _integer_metrics(s: int, cap: int, lam: float, mu: float) -> QueueMetrics:
    probs = _state_probs(s, cap, lam, mu)
    balk = float(probs[cap])
    length = float(np.dot(np.arange(cap + 1), probs))
    wait = 1.0 / mu if lam == 0.0 else length / (lam * (1.0 - balk))
    return QueueMetrics(balk, wait, length, probs, float(cap))


def mmsk_metrics(spec: QueueSpec, lam: float) -> QueueMetrics:
    """Balking probability, mean sojourn time (Little) and mean occupancy."""
    if spec.erlang_shape != 1:
        raise QueueError("mmsk_metrics needs exponential service (erlang_shape=1)")
    lam = _check_rate(lam)
    return _integer_metrics(spec.servers, spec.capacity, lam, spec.service_rate)


def two_moment_capacity(spec: QueueSpec, lam: float) -> float:
    """Effective capacity K' of the M/M/s/K' surrogate for M/E_r/s/K."""
    lam = _check_rate(lam)
    r = spec.erlang_shape
    s, mu = spec.servers, spec.service_rate
    t = 0.5 * (1.0 / r - 1.0) * math.sqrt(lam / (s * mu) * math.exp(-1.0 / r))
    if 1.0 + t <= 0.0:
        raise QueueError(
            f"two-moment approximation breaks down (1 + T = {1.0 + t:.4g} <= 0) at lam={lam}"
        )
    if t == 0.0:
        return float(spec.capacity)
    return (spec.capacity - s) / (1.0 + t) + s


def mesk_metrics(spec: QueueSpec, lam: float) -> QueueMetrics:
    """Two-moment approximation of M/E_r/s/K metrics.

    The M/M/s/K closed forms are evaluated at the real capacity K'.  State
    probabilities are only reported at integer states 0..floor(K'), so they
    do not sum exactly to one when K' is fractional; the balking probability
    and mean occupancy use the analytic continuation of the geometric sums.
    """
    lam = _check_rate(lam)
    s, mu = spec.servers, spec.service_rate
    cap = two_moment_capacity(spec, lam)
    if lam == 0.0 or cap == int(cap):
        return _integer_metrics(s, int(cap), lam, mu)

    log_z, head, log_c, log_rho, critical = _log_norm(s, cap, lam, mu)
    probs = _state_probs(s, cap, lam, mu)
    balk = math.exp(_log_term(cap, s, head, log_c, log_rho) - log_z)
    n_geo = cap - s + 1
    geom = math.exp(_log_geom(log_rho, n_geo, critical))
    tail_mass = s * geom + _weighted_geom(log_rho, n_geo, critical)
    length = sum(m * math.exp(head[m] - log_z) for m in range(s))
    length += math.exp(log_c - log_z) * tail_mass
    wait = length / (lam * (1.0 - balk))
    return QueueMetrics(balk, wait, length, probs, cap)


def queue_metrics(spec: QueueSpec, lam: float) -> QueueMetrics:
    if spec.erlang_shape == 1:
        return mmsk_metrics(spec, lam)
    return mesk_metrics(spec, lam)


def balk_prob(spec: QueueSpec, lam: float) -> float:
    return queue_metrics(spec, lam).balk_prob


def avg_wait(spec: QueueSpec, lam: float) -> float:
    return queue_metrics(spec, lam).avg_wait


def throughput(spec: QueueSpec, lam: float) -> float:
    """Served users per unit time, lam * (1 - balk)."""
    if lam == 0:
        return 0.0
    return lam * (1.0 - balk_prob(spec, lam))


@dataclass(frozen=True)
class CongestionTable:
    """Cumulative congestion costs on a rate grid.

    ``waiting_cost[n]`` integrates the mean wait from 0 to ``grid[n]`` and
    ``balking_cost[n]`` the balking probability; their derivatives at the grid
    points are exactly ``wait`` and ``balk``.
    """

    grid: np.ndarray
    waiting_cost: np.ndarray
    balking_cost: np.ndarray
    wait: np.ndarray
    balk: np.ndarray

    def tangent(self, kind: str, n: int) -> tuple[float, float]:
        """(slope, intercept) of the tangent line at breakpoint ``n``."""
        if kind == "w":
            value, slope = self.waiting_cost[n], self.wait[n]
        elif kind == "p":
            value, slope = self.balking_cost[n], self.balk[n]
        else:
            raise ValueError(f"unknown congestion kind {kind!r}")
        return float(slope), float(value - slope * self.grid[n])


def congestion_integrals(spec: QueueSpec, grid: Sequence[float], tol: float = 1e-9) -> CongestionTable:
    grid_arr = np.asarray(grid, dtype=float)
    if grid_arr.ndim != 1 or grid_arr.size == 0:
        raise ValueError("grid must be a non-empty 1-d sequence")
    if grid_arr[0] < 0 or np.any(np.diff(grid_arr) <= 0):
        raise ValueError("grid must be strictly increasing and start at a rate >= 0")
    return _congestion_cached(spec, tuple(grid_arr.tolist()), tol)


@lru_cache(maxsize=4096)
def _congestion_cached(spec: QueueSpec, grid: tuple[float, ...], tol: float) -> CongestionTable:
    def integrand(q: float) -> np.ndarray:
        m = queue_metrics(spec, q)
        return np.array([m.avg_wait, m.balk_prob])

    pts = np.asarray(grid)
    n = pts.size
    wait = np.empty(n)
    balk = np.empty(n)
    for k, q in enumerate(pts):
        m = queue_metrics(spec, q)
        wait[k], balk[k] = m.avg_wait, m.balk_prob

    cum = np.zeros((n, 2))
    lo = 0.0
    acc = np.zeros(2)
    for k, q in enumerate(pts):
        if q > lo:
            part, _ = quad_vec(integrand, lo, q, epsabs=tol, epsrel=1e-12)
            acc = acc + part
        cum[k] = acc
        lo = q
    for arr in (pts, cum, wait, balk):
        arr.setflags(write=False)
    return CongestionTable(pts, cum[:, 0], cum[:, 1], wait, balk)


def _lemma_sums(s: int, cap: int, tau: Fraction) -> Fraction:
    fact = math.factorial

    def tail(n: int) -> Fraction:
        return Fraction(1, fact(s) * s ** (n - s))

    def pw(n: int) -> Fraction:
        return tau**n if n >= 0 else Fraction(0)

    first = sum((pw(n - 2) / fact(n - 2) for n in range(2, s)), Fraction(0))
    first += sum((n * (n - 1) * pw(n - 2) * tail(n) for n in range(s, cap + 1)), Fraction(0))
    second = sum((pw(n) / fact(n) for n in range(0, s)), Fraction(0))
    second += sum((pw(n) * tail(n) for n in range(s, cap)), Fraction(0))
    third = sum((pw(n - 1) / fact(n - 1) for n in range(1, s)), Fraction(0))
    third += sum((n * pw(n - 1) * tail(n) for n in range(s, cap + 1)), Fraction(0))
    fourth = sum((pw(n - 1) / fact(n - 1) for n in range(1, s)), Fraction(0))
    fourth += sum((n * pw(n - 1) * tail(n) for n in range(s, cap)), Fraction(0))
    return first * second - third * fourth


def lemma_e_value(s: int, cap: int, tau: float) -> Fraction:
    """Exact value of the waiting-time monotonicity polynomial E_{sK}(tau)."""
    if not 1 <= s <= cap:
        raise QueueError(f"need 1 <= s <= K, got s={s}, K={cap}")
    if tau < 0:
        raise QueueError(f"tau must be >= 0, got {tau}")
    return _lemma_sums(s, cap, Fraction(tau))


@dataclass(frozen=True)
class LemmaReport:
    servers: int
    capacity: int
    taus: tuple[float, ...]
    values: tuple[float, ...]
    passed: bool


def lemma_E_check(s: int, cap: int, taus: Sequence[float]) -> LemmaReport:
    """Evaluate E_{sK} exactly in rational arithmetic on a grid of tau."""
    exact = [lemma_e_value(s, cap, t) for t in taus]
    return LemmaReport(
        servers=s,
        capacity=cap,
        taus=tuple(float(t) for t in taus),
        values=tuple(float(v) for v in exact),
        passed=all(v >= 0 for v in exact),
    )


def congestion_cost(spec: QueueSpec, lam: float, tol: float = 1e-10) -> tuple[float, float]:
    """Integrals of the mean wait and of the balking probability over [0, lam]."""
    lam = _check_rate(lam)
    if lam == 0.0:
        return 0.0, 0.0

    def integrand(q: float) -> np.ndarray:
        m = queue_metrics(spec, q)
        return np.array([m.avg_wait, m.balk_prob])

    val, _ = quad_vec(integrand, 0.0, lam, epsabs=tol, epsrel=1e-12)
    return float(val[0]), float(val[1])
