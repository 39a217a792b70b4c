"""Weighted total-least-squares fit of raw frequencies to a GPT in which three
binary measurements are tomographically complete.

Such a GPT puts every column of the 4 x 8 probability table on a hyperplane
``a p1 + b p2 + c p3 + d p4 = 1``. The fit minimises the summed weighted
distances of the raw columns to that hyperplane over (a, b, c, d), then
projects each raw column onto it.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .gpt_core import DataMatrix
from .quantum_sim import uncertainty_floor

N_STARTS = 16
PROB_TOL = 1e-9
DEFAULT_FLOOR_N = 100_000
# chi2 is non-negative, so a start this close to zero is already the global minimum
EXACT_FIT_CHI2 = 1e-20


class FitError(RuntimeError):
    """Raised when the hyperplane fit fails or yields unusable probabilities."""


class DegenerateDataWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Hyperplane:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        coeffs = [float(x) for x in (self.a, self.b, self.c, self.d)]
        if not all(math.isfinite(x) for x in coeffs):
            raise ValueError("hyperplane coefficients must be finite")
        if all(x == 0 for x in coeffs):
            raise ValueError("the zero vector does not define a hyperplane")
        for name, x in zip("abcd", coeffs):
            object.__setattr__(self, name, x)

    @property
    def coeffs(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d])

    @classmethod
    def from_array(cls, h) -> "Hyperplane":
        return cls(*(float(x) for x in h))

    def residual(self, p) -> np.ndarray:
        """``h . p - 1`` for a 4-vector or for every column of a 4 x k grid."""
        return self.coeffs @ np.asarray(p, dtype=float) - 1.0

    def fourth_row_effect(self) -> np.ndarray:
        """GPT effect of M_4 when M_1..M_3 are the fiducials."""
        if self.d == 0:
            raise ZeroDivisionError("M_4 is not determined when d = 0")
        return -np.array([-1.0, self.a, self.b, self.c]) / self.d


@dataclass(frozen=True)
class FitResult:
    hyperplane: Hyperplane
    primary: DataMatrix
    chi2_total: float
    chi2_per_column: tuple
    p_value: float
    dof: int = 4

    def to_dict(self) -> dict:
        h = self.hyperplane
        return {
            "hyperplane": {"a": h.a, "b": h.b, "c": h.c, "d": h.d},
            "primary": self.primary.to_dict(),
            "chi2_total": self.chi2_total,
            "chi2_per_column": list(self.chi2_per_column),
            "p_value": self.p_value,
            "dof": self.dof,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        h = data["hyperplane"]
        return cls(Hyperplane(h["a"], h["b"], h["c"], h["d"]),
                   DataMatrix.from_dict(data["primary"]), data["chi2_total"],
                   tuple(data["chi2_per_column"]), data["p_value"], data.get("dof", 4))


def _coeffs(h):
    return h.coeffs if isinstance(h, Hyperplane) else np.asarray(h, dtype=float)


def column_chi2(r, dr, h) -> float:
    """Squared weighted distance from column ``r`` to the hyperplane."""
    r, dr, c = np.asarray(r, float), np.asarray(dr, float), _coeffs(h)
    if np.any(dr <= 0):
        raise ValueError("uncertainties must be strictly positive")
    denom = float(np.sum((c * dr) ** 2))
    if denom == 0:
        raise ZeroDivisionError("zero weighted norm of hyperplane normal")
    return float((c @ r - 1.0) ** 2 / denom)


def project_column(r, dr, h) -> np.ndarray:
    """Closest point to ``r`` on the hyperplane in the metric diag(1/dr^2)."""
    r, dr, c = np.asarray(r, float), np.asarray(dr, float), _coeffs(h)
    if np.any(dr <= 0):
        raise ValueError("uncertainties must be strictly positive")
    w = c * dr ** 2
    p = r - w * (c @ r - 1.0) / (c @ w)
    # one refinement sweep takes the constraint residual down to rounding level
    return p - w * (c @ p - 1.0) / (c @ w)


def chi2_objective(h, R, dR) -> float:
    """Total chi-squared for hyperplane ``h``; R and dR are 4 x k grids."""
    h = np.asarray(h, float)
    s = h @ R - 1.0
    w = (h ** 2) @ (dR ** 2)
    return float(np.sum(s ** 2 / w))


def chi2_gradient(h, R, dR) -> np.ndarray:
    h = np.asarray(h, float)
    s = h @ R - 1.0
    w = (h ** 2) @ (dR ** 2)
    return 2.0 * (R @ (s / w)) - 2.0 * h * ((dR ** 2) @ (s ** 2 / w ** 2))


# -- chi-squared tail probability ------------------------------------------

_GAMMA_EPS = 1e-16
_GAMMA_ITMAX = 10_000


def _gamma_series(a, x):
    """Regularized lower incomplete gamma P(a, x) by its power series."""
    term = total = 1.0 / a
    ap = a
    for _ in range(_GAMMA_ITMAX):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    """Regularized upper incomplete gamma Q(a, x) by modified Lentz continued fraction."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_ITMAX):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def chi2_p_value(x: float, dof: int) -> float:
    """Upper-tail probability of a chi-squared variable with ``dof`` degrees of freedom."""
    if dof < 1:
        raise ValueError("dof must be at least 1")
    if x < 0:
        raise ValueError("chi-squared values are non-negative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    a, y = dof / 2.0, x / 2.0
    if y < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _gamma_series(a, y)))
    return min(1.0, max(0.0, _gamma_cf(a, y)))


# -- the fit -----------------------------------------------------------------

def _start_points(R, n_starts=N_STARTS):
    """Exact hyperplanes through 4-subsets of columns, plus a = b = c = d = 1/2."""
    subsets = list(itertools.combinations(range(R.shape[1]), 4))
    order = np.random.default_rng(0).permutation(len(subsets))
    starts = []
    for k in order:
        sub = R[:, subsets[k]].T
        if np.linalg.cond(sub) > 1e10:
            continue
        starts.append(np.linalg.solve(sub, np.ones(4)))
        if len(starts) == n_starts - 1:
            break
    starts.append(np.full(4, 0.5))
    return starts


def _check_degenerate(R):
    centered = R - R.mean(axis=1, keepdims=True)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[2] <= 1e-9 * max(sv[0], 1e-300):
        warnings.warn("raw columns span fewer than three dimensions; hyperplane is not unique",
                      DegenerateDataWarning, stacklevel=3)


def _validated(p):
    if np.any(p < -PROB_TOL) or np.any(p > 1 + PROB_TOL):
        bad = p[(p < -PROB_TOL) | (p > 1 + PROB_TOL)]
        raise FitError(f"projected probabilities outside [0, 1]: {bad.tolist()}")
    return np.clip(p, 0.0, 1.0)


def fit_hyperplane(raw: DataMatrix, *, n_starts: int = N_STARTS,
                   floor_n: int = DEFAULT_FLOOR_N) -> FitResult:
    """Best-fit hyperplane, projected primary matrix and chi-squared statistics.

    Zero uncertainties are replaced by the counting floor 1/(2 * floor_n).
    """
    if raw.shape != (4, 8):
        raise ValueError("raw data must be a 4 x 8 matrix")
    if raw.uncertainties is None:
        raise ValueError("raw data needs per-cell uncertainties")
    R = raw.as_float()
    dR = np.array(raw.uncertainties, dtype=float)
    dR = np.where(dR > 0, dR, uncertainty_floor(R, floor_n))
    _check_degenerate(R)

    best_h, best_f = None, math.inf
    for h0 in _start_points(R, n_starts):
        f0 = chi2_objective(h0, R, dR)
        if f0 <= EXACT_FIT_CHI2:
            best_h, best_f = np.array(h0), f0
            break
        try:
            res = minimize(chi2_objective, h0, args=(R, dR), jac=chi2_gradient,
                           method="BFGS", options={"gtol": 1e-12, "maxiter": 2000})
            h, f = res.x, float(res.fun)
        except (FloatingPointError, ZeroDivisionError):
            h, f = h0, f0
        if not math.isfinite(f) or f0 < f:
            h, f = h0, f0
        if math.isfinite(f) and f < best_f:
            best_h, best_f = np.array(h), f
    if best_h is None:
        raise FitError("hyperplane optimisation did not converge from any start")

    plane = Hyperplane.from_array(best_h)
    per_col = tuple(column_chi2(R[:, j], dR[:, j], plane) for j in range(R.shape[1]))
    primary = np.column_stack([_validated(project_column(R[:, j], dR[:, j], plane))
                               for j in range(R.shape[1])])
    total = float(math.fsum(per_col))
    return FitResult(plane, DataMatrix(primary, None, raw.row_ids, raw.col_ids),
                     total, per_col, chi2_p_value(total, 4))
