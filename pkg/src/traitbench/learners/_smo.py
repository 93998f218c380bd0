"""Sequential minimal optimization for epsilon-insensitive kernel regression.

Solves the dual

    min_{a, a*}  1/2 (a - a*)' K (a - a*) + eps * sum(a + a*) - y' (a - a*)
    s.t.         sum(a - a*) = 0,   0 <= a_i, a*_i <= C

over the doubled variable vector theta = [a; a*] with signs
z = [+1; -1], using maximal-violating-pair working set selection. The
stopping rule is the KKT violation gap m(theta) - M(theta) <= tol.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

_TAU = 1e-12


@dataclass(frozen=True)
class SmoResult:
    beta: np.ndarray       # a - a*, one coefficient per training point
    bias: float
    iterations: int
    gap: float
    converged: bool


def solve_svr(K: np.ndarray, y: np.ndarray, C: float, epsilon: float, tol: float = 1e-3, max_iter: int = 200_000) -> SmoResult:
    n = len(y)
    theta = np.zeros(2 * n)
    z = np.concatenate([np.ones(n), -np.ones(n)])
    grad = np.concatenate([epsilon - y, epsilon + y])  # Q theta + p at theta = 0

    def q_column(t: int) -> np.ndarray:
        col = K[:, t % n]
        return z[t] * np.concatenate([col, -col])

    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        neg_zg = -z * grad
        up = ((z > 0) & (theta < C)) | ((z < 0) & (theta > 0))
        low = ((z > 0) & (theta > 0)) | ((z < 0) & (theta < C))
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.flatnonzero(up)[np.argmax(neg_zg[up])])
        j = int(np.flatnonzero(low)[np.argmin(neg_zg[low])])
        gap = neg_zg[i] - neg_zg[j]
        if gap <= tol:
            break

        # Both sign cases reduce to K_ii + K_jj - 2 K_ij on the base kernel.
        quad = max(K[i % n, i % n] + K[j % n, j % n] - 2.0 * K[i % n, j % n], _TAU)
        old_i, old_j = theta[i], theta[j]

        if z[i] != z[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = theta[i] - theta[j]
            theta[i] += delta
            theta[j] += delta
            if diff > 0:
                if theta[j] < 0:
                    theta[j] = 0.0
                    theta[i] = diff
            else:
                if theta[i] < 0:
                    theta[i] = 0.0
                    theta[j] = -diff
            if diff > 0:
                if theta[i] > C:
                    theta[i] = C
                    theta[j] = C - diff
            else:
                if theta[j] > C:
                    theta[j] = C
                    theta[i] = C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = theta[i] + theta[j]
            theta[i] -= delta
            theta[j] += delta
            if total > C:
                if theta[i] > C:
                    theta[i] = C
                    theta[j] = total - C
            else:
                if theta[j] < 0:
                    theta[j] = 0.0
                    theta[i] = total
            if total > C:
                if theta[j] > C:
                    theta[j] = C
                    theta[i] = total - C
            else:
                if theta[i] < 0:
                    theta[i] = 0.0
                    theta[j] = total

        grad += q_column(i) * (theta[i] - old_i) + q_column(j) * (theta[j] - old_j)

    converged = gap <= tol
    if not converged:
        logger.warning("SVR SMO stopped at iteration cap %d with gap %.3g (tol %.3g)", max_iter, gap, tol)

    beta = theta[:n] - theta[n:]
    neg_zg = -z * grad
    free = (theta > 0) & (theta < C)
    if free.any():
        bias = float(neg_zg[free].mean())
    else:
        up = ((z > 0) & (theta < C)) | ((z < 0) & (theta > 0))
        low = ((z > 0) & (theta > 0)) | ((z < 0) & (theta < C))
        hi = neg_zg[up].max() if up.any() else 0.0
        lo = neg_zg[low].min() if low.any() else 0.0
        bias = float((hi + lo) / 2.0)
    return SmoResult(beta=beta, bias=bias, iterations=it, gap=float(gap), converged=converged)
