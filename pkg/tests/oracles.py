"""Independent reference computations used to pin expected values in tests.

Nothing here imports the package's solvers or fit routines.
"""
import itertools

import numpy as np

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def density(r):
    return 0.5 * (I2 + r[0] * SX + r[1] * SY + r[2] * SZ)


def effect_operator(e0, e):
    return 0.5 * (e0 * I2 + e[0] * SX + e[1] * SY + e[2] * SZ)


def trace_born(e0, e, r):
    """tr(E rho) with explicit 2x2 matrices."""
    return float(np.real(np.trace(effect_operator(e0, e) @ density(r))))


def _independent_rows(A, b, tol=1e-9):
    keep = []
    for i in range(A.shape[0]):
        trial = A[keep + [i]]
        if np.linalg.matrix_rank(trial, tol=tol) == len(keep) + 1:
            keep.append(i)
    return A[keep], b[keep]


def brute_force_lp(c, A, b, upper=None, tol=1e-9, batch=20000):
    """max c.x s.t. Ax = b, 0 <= x (<= upper) by enumerating every basis.

    Returns (best value, best x) or (None, None) when infeasible.
    """
    c, A, b = (np.asarray(v, dtype=float) for v in (c, A, b))
    n = c.size
    if upper is not None:
        k = n
        A = np.block([[A, np.zeros((A.shape[0], k))], [np.eye(n), np.eye(k)]])
        b = np.concatenate([b, upper])
        c = np.concatenate([c, np.zeros(k)])
    A, b = _independent_rows(A, b)
    m, n_all = A.shape
    best, best_x = None, None
    combos = itertools.combinations(range(n_all), m)
    while True:
        chunk = list(itertools.islice(combos, batch))
        if not chunk:
            break
        idx = np.array(chunk)
        B = A[:, idx].transpose(1, 0, 2)  # (batch, m, m)
        ok = np.abs(np.linalg.det(B)) > 1e-12
        if not ok.any():
            continue
        idx, B = idx[ok], B[ok]
        xb = np.linalg.solve(B, np.broadcast_to(b, (len(B), m))[..., None])[..., 0]
        feas = np.all(xb >= -tol, axis=1)
        for row, x_sub in zip(idx[feas], xb[feas]):
            x = np.zeros(n_all)
            x[row] = x_sub
            if np.max(np.abs(A @ x - b)) > 1e-7:
                continue
            val = float(c @ x)
            if best is None or val > best + 1e-12:
                best, best_x = val, x
    if best_x is not None:
        best_x = best_x[:n if upper is None else n_all // 2]
    return best, best_x


def completeness_plane(effects):
    """Hyperplane (a, b, c, d) with a E_1 + b E_2 + c E_3 + d E_4 = unit effect.

    Effects are (e0, e) pairs in the 1/2(e0 I + e.sigma) parametrization.
    """
    E = np.array([[e0, *e] for e0, e in effects]).T
    unit = np.array([2.0, 0.0, 0.0, 0.0])
    return np.linalg.solve(E, unit)
