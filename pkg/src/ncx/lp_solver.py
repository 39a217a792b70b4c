"""Dense two-phase simplex with Bland's rule for small equality-form LPs.

    maximize    c . x
    subject to  A x = b,  0 <= x <= upper
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9
OPT_TOL = 1e-10
RANK_TOL = 1e-9
MAX_PIVOTS = 50_000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    objective: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.array(self.objective, dtype=float).ravel()
        A = np.array(self.A_eq, dtype=float).reshape(-1, c.size)
        b = np.array(self.b_eq, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError("A_eq and b_eq disagree on the number of constraints")
        if A.shape[0] > c.size:
            raise ValueError("more equality constraints than variables")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("LP data must be finite")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "A_eq", A)
        object.__setattr__(self, "b_eq", b)
        if self.upper is not None:
            u = np.array(self.upper, dtype=float).ravel()
            if u.size != c.size or np.any(u < 0) or np.any(np.isnan(u)):
                raise ValueError("upper bounds must be non-negative, one per variable")
            object.__setattr__(self, "upper", u)


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray | None
    value: float | None
    status: str
    basis: tuple = ()
    reduced_costs: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _standard_form(lp: LinearProgram):
    """Fold finite upper bounds in as x_i + s_i = u_i."""
    A, b, c = lp.A_eq, lp.b_eq, lp.objective
    n = c.size
    if lp.upper is None:
        return A, b, c
    bounded = np.flatnonzero(np.isfinite(lp.upper))
    k = bounded.size
    A_std = np.zeros((A.shape[0] + k, n + k))
    A_std[:A.shape[0], :n] = A
    for row, i in enumerate(bounded):
        A_std[A.shape[0] + row, i] = 1.0
        A_std[A.shape[0] + row, n + row] = 1.0
    b_std = np.concatenate([b, lp.upper[bounded]])
    c_std = np.concatenate([c, np.zeros(k)])
    return A_std, b_std, c_std


def _independent_rows(A, b):
    """Drop linearly dependent equality rows; None if the dropped ones are inconsistent."""
    m = A.shape[0]
    if m == 0:
        return A, b
    scale = np.maximum(np.abs(A).max(axis=1), 1.0)
    As, bs = A / scale[:, None], b / scale
    _, R, piv = qr(As.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > RANK_TOL * max(diag[0], 1e-300))) if diag.size else 0
    keep = np.sort(piv[:rank])
    drop = np.sort(piv[rank:])
    if drop.size:
        coef = np.linalg.lstsq(As[keep].T, As[drop].T, rcond=None)[0]
        if np.any(np.abs(coef.T @ bs[keep] - bs[drop]) > FEAS_TOL):
            return None
    return A[keep], b[keep]


def _pivot(T, row, col):
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    T[:, col] = 0.0
    T[row, col] = 1.0


def _refactor(T, basis, M):
    """Rebuild ``T`` as B^-1 M from the untouched system ``M`` so pivot drift never accumulates."""
    try:
        T[:] = np.linalg.solve(M[:, basis], M)
    except np.linalg.LinAlgError:
        pass


def _bland(T, basis, cost, allowed, M):
    """Run Bland-rule pivots on constraint tableau ``T`` (last column = rhs).

    ``M`` is the original [A | rhs] system the tableau was derived from.
    Returns False if the LP is unbounded along some allowed column.
    """
    for _ in range(MAX_PIVOTS):
        reduced = cost - cost[basis] @ T[:, :-1]
        reduced[basis] = 0.0
        entering = next((j for j in allowed if reduced[j] > OPT_TOL), None)
        if entering is None:
            return True
        col = T[:, entering]
        candidates = np.flatnonzero(col > PIVOT_TOL)
        if candidates.size == 0:
            return False
        ratios = np.maximum(T[candidates, -1], 0.0) / col[candidates]
        best = ratios.min()
        tied = candidates[ratios <= best + FEAS_TOL * 1e-3]
        leave = min(tied, key=lambda i: basis[i])
        _pivot(T, leave, entering)
        basis[leave] = entering
        _refactor(T, basis, M)
    raise RuntimeError("simplex pivot limit exceeded")


def solve(lp: LinearProgram) -> LpSolution:
    """Vertex-optimal solution of ``lp`` (maximization); never raises on bad LPs."""
    A, b, c = _standard_form(lp)
    reduced_rows = _independent_rows(A, b)
    if reduced_rows is None:
        return LpSolution(None, None, INFEASIBLE)
    A, b = reduced_rows
    m, n = A.shape
    n_orig = lp.objective.size

    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign

    # Phase 1: artificials n..n+m-1 start in the basis.
    T = np.hstack([A, np.eye(m), b[:, None]])
    basis = list(range(n, n + m))
    phase1_cost = np.concatenate([np.zeros(n), -np.ones(m)])
    _bland(T, basis, phase1_cost, range(n + m), T.copy())
    if T[:, -1] @ (np.array(basis) >= n) > FEAS_TOL:
        return LpSolution(None, None, INFEASIBLE)

    # Drive remaining artificials out; rows that cannot pivot are redundant.
    keep = []
    for i in range(m):
        if basis[i] < n:
            keep.append(i)
            continue
        row = T[i, :n]
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > PIVOT_TOL:
            _pivot(T, i, j)
            basis[i] = j
            keep.append(i)
    T = T[keep][:, list(range(n)) + [n + m]]
    basis = [basis[i] for i in keep]
    A_kept, b_kept = A[keep], b[keep]
    M = np.hstack([A_kept, b_kept[:, None]])
    _refactor(T, basis, M)

    if not _bland(T, basis, c, range(n), M):
        return LpSolution(None, None, UNBOUNDED)

    # Re-solve the final basis against the original data to shed pivot drift.
    B = A_kept[:, basis]
    x = np.zeros(n)
    if basis:
        try:
            x_b = np.linalg.solve(B, b_kept)
        except np.linalg.LinAlgError:
            x_b = T[:, -1]
        if np.any(x_b < -FEAS_TOL):
            x_b = T[:, -1]
        x[basis] = x_b
        y = np.linalg.lstsq(B.T, c[basis], rcond=None)[0]
        reduced = c - A_kept.T @ y
    else:
        reduced = c.copy()
    x = np.where((x < 0) & (x > -FEAS_TOL), 0.0, x)
    x_out = x[:n_orig]
    return LpSolution(x_out, float(lp.objective @ x_out), OPTIMAL,
                      tuple(int(j) for j in basis), reduced[:n_orig])
