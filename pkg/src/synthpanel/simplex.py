"""Least squares over the probability simplex.

Solves min ||A w - b||^2 subject to w >= 0 and sum(w) = 1 with a fully
corrective conditional-gradient method: each step adds the steepest-descent
vertex to the active set and then re-solves the problem exactly on that
support. For these small quadratic programs the method terminates at the
global optimum after a handful of steps, with the support size bounded by the
number of rows of A plus one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoDonors


@dataclass(frozen=True)
class SimplexLsqResult:
    weights: np.ndarray
    objective: float
    iterations: int
    gap: float


def _equality_lsq(As: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimize ||As u - b||^2 subject to sum(u) = 1 (sign-unconstrained)."""
    m = As.shape[1]
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = 2.0 * (As.T @ As)
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    rhs = np.concatenate([2.0 * (As.T @ b), [1.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:m]


def _corrective_step(As: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Exact minimizer over the simplex restricted to the current support.

    Lawson-Hanson style active-set loop: solve with the equality constraint
    only, and while any coordinate turns negative, step to the boundary,
    freeze the blocking coordinates at zero and re-solve.
    """
    m = As.shape[1]
    if m == 1:
        return np.ones(1)
    w = w.copy()
    free = np.ones(m, dtype=bool)
    for _ in range(2 * m + 2):
        target = np.zeros(m)
        target[free] = _equality_lsq(As[:, free], b)
        if target[free].min() >= -1e-12:
            w = np.clip(target, 0.0, None)
            break
        diff = target - w
        blocking = free & (target < -1e-12) & (diff < 0.0)
        if not blocking.any():
            w = np.clip(target, 0.0, None)
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            steps = np.where(blocking, w / -diff, np.inf)
        alpha = min(1.0, float(steps.min()))
        w = w + alpha * diff
        hit = blocking & (steps <= alpha + 1e-15)
        w[hit] = 0.0
        free &= ~hit
        if not free.any():
            break
    total = w.sum()
    return w / total if total > 0 else np.full(m, 1.0 / m)


def simplex_least_squares(
    A: np.ndarray,
    b: np.ndarray,
    max_iter: int = 10_000,
    improvement_tol: float = 1e-10,
    init_support: np.ndarray | None = None,
    init_weights: np.ndarray | None = None,
) -> SimplexLsqResult:
    """Return the simplex-constrained least-squares weights for A w ~ b.

    ``init_support``/``init_weights`` warm-start the active set (used by the
    nested optimizer, where consecutive calls differ only slightly). The
    returned weights are renormalized so feasibility holds to float precision.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionMismatch(f"A must be 2-d, got shape {A.shape}")
    k, n = A.shape
    if n == 0:
        raise NoDonors("donor matrix has no columns")
    if b.shape != (k,):
        raise DimensionMismatch(f"b has shape {b.shape}, expected ({k},)")

    scale = max(1.0, float(b @ b))
    gap_tol = 1e-13 * scale

    if init_support is not None and len(init_support) > 0:
        support = list(dict.fromkeys(int(j) for j in init_support))
        if init_weights is not None and len(init_weights) == len(support):
            w_s = np.clip(np.asarray(init_weights, dtype=np.float64), 0.0, None)
            total = w_s.sum()
            w_s = w_s / total if total > 0 else np.full(len(support), 1.0 / len(support))
        else:
            w_s = np.full(len(support), 1.0 / len(support))
    else:
        # start from the single best vertex
        col_obj = np.einsum("ij,ij->j", A, A) - 2.0 * (b @ A)
        j0 = int(np.argmin(col_obj))
        support = [j0]
        w_s = np.ones(1)

    f_prev = np.inf
    gap = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        sub = A[:, support]
        w_s = _corrective_step(sub, b, w_s)

        keep = w_s > 0.0
        if not keep.all():
            support = [s for s, k_ in zip(support, keep) if k_]
            w_s = w_s[keep]
            sub = A[:, support]

        resid = sub @ w_s - b
        f = float(resid @ resid)
        grad = 2.0 * (resid @ A)
        j_star = int(np.argmin(grad))
        gap = float(grad[support] @ w_s - grad[j_star])
        if gap <= gap_tol:
            break
        if f_prev - f < improvement_tol * min(1.0, scale):
            break
        f_prev = f
        if j_star in support:
            break
        support.append(j_star)
        w_s = np.append(w_s, 0.0)

    w = np.zeros(n)
    w[support] = w_s
    w = np.clip(w, 0.0, None)
    w /= w.sum()
    resid = A @ w - b
    return SimplexLsqResult(
        weights=w,
        objective=float(resid @ resid),
        iterations=iterations,
        gap=gap,
    )
