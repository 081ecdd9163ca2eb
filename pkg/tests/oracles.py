"""Independent reference computations used by the tests."""
from __future__ import annotations

import numpy as np


def birth_death_metrics(s: int, cap: int, lam: float, mu: float) -> tuple[float, float, float]:
    """(balk, mean wait, mean number) of M/M/s/K from the balance equations solved as a linear system."""
    n = cap + 1
    Q = np.zeros((n, n))
    for k in range(n):
        if k < cap:
            Q[k, k + 1] = lam
        if k > 0:
            Q[k, k - 1] = min(k, s) * mu
        Q[k, k] = -Q[k].sum()
    # replace one balance equation with the normalisation
    M = Q.T.copy()
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    p = np.linalg.solve(M, rhs)
    L = float(np.arange(n) @ p)
    balk = float(p[-1])
    if lam == 0:
        return balk, 1.0 / mu, L
    return balk, L / (lam * (1.0 - balk)), L
