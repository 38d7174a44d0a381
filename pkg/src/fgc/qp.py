"""Primal active-set solver for small box-constrained strictly convex QPs.

The core works on the least-squares form ``min ||M x - d||^2`` so that
subproblems are solved by orthogonal factorization instead of normal
equations; this keeps the weakly regularized force-distribution problems
accurate. ``box_qp`` adapts the standard ``1/2 x'Hx + g'x`` form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QPError(RuntimeError):
    pass


class NotPositiveDefiniteError(QPError):
    pass


class EmptyBoxError(QPError):
    pass


class QPIterationError(QPError):
    pass


@dataclass
class BoxQPResult:
    x: np.ndarray
    at_lower: list[int]
    at_upper: list[int]
    gradient: np.ndarray
    iterations: int
    kkt_ok: bool


def _check_box(lower, upper):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower >= upper):
        raise EmptyBoxError("empty box: lower bound not below upper bound")
    return lower, upper


def box_least_squares(M, d, lower, upper, max_iter: int | None = None) -> BoxQPResult:
    """Minimize ``||M x - d||^2`` subject to ``lower <= x <= upper``."""
    M = np.asarray(M, dtype=float)
    d = np.asarray(d, dtype=float)
    lower, upper = _check_box(lower, upper)
    n = M.shape[1]

    s = np.linalg.svd(M, compute_uv=False)
    if s.size < n or s[-1] <= 1e-13 * max(s[0], 1e-300):
        raise NotPositiveDefiniteError("Hessian is not positive definite")

    max_iter = max_iter or 50 * n + 50
    x = np.clip(np.zeros(n), lower, upper)
    # +1 fixed at upper, -1 fixed at lower, 0 free
    state = np.zeros(n, dtype=int)
    state[x == lower] = -1
    state[x == upper] = 1

    grad_scale = 2.0 * np.linalg.norm(M.T @ d) + 2.0 * s[0] ** 2 * (np.linalg.norm(x) + 1.0)
    tol = 1e-12 * grad_scale

    for it in range(1, max_iter + 1):
        free = state == 0
        z = x.copy()
        if free.any():
            rhs = d - M[:, ~free] @ x[~free]
            z[free] = np.linalg.lstsq(M[:, free], rhs, rcond=None)[0]
        step = z - x

        if np.linalg.norm(step) <= 1e-14 * (1.0 + np.linalg.norm(x)):
            grad = 2.0 * M.T @ (M @ x - d)
            lam = np.where(state == -1, grad, np.where(state == 1, -grad, 0.0))
            worst = int(np.argmin(lam))  # lowest index on ties
            if lam[worst] >= -tol:
                kkt = bool(np.all(np.abs(grad[free]) <= 1e-8 * grad_scale))
                return BoxQPResult(
                    x=x, at_lower=[int(i) for i in np.flatnonzero(state == -1)],
                    at_upper=[int(i) for i in np.flatnonzero(state == 1)],
                    gradient=grad, iterations=it, kkt_ok=kkt,
                )
            state[worst] = 0
            continue

        # ratio test over free components moving toward a bound
        t, block = 1.0, -1
        for i in np.flatnonzero(free):
            if step[i] < 0.0:
                ti = (lower[i] - x[i]) / step[i]
            elif step[i] > 0.0:
                ti = (upper[i] - x[i]) / step[i]
            else:
                continue
            if ti < t:
                t, block = ti, i
        x = x + max(t, 0.0) * step
        if block >= 0:
            if step[block] < 0.0:
                x[block], state[block] = lower[block], -1
            else:
                x[block], state[block] = upper[block], 1
        np.clip(x, lower, upper, out=x)

    raise QPIterationError(f"active-set iteration limit ({max_iter}) reached without KKT satisfaction")


def box_qp(H, g, lower, upper) -> BoxQPResult:
    """Minimize ``1/2 x'Hx + g'x`` subject to ``lower <= x <= upper``."""
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    _check_box(lower, upper)
    try:
        L = np.linalg.cholesky(0.5 * (H + H.T))
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("Hessian is not positive definite") from None
    # 1/2 x'Hx + g'x = ||M x - d||^2 + const with M = L'/sqrt2, d = -L^-1 g / sqrt2
    M = L.T / np.sqrt(2.0)
    d = -np.linalg.solve(L, g) / np.sqrt(2.0)
    return box_least_squares(M, d, lower, upper)
