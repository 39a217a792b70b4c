"""Secondary preparations and measurements: LP-optimal convex mixtures of the
fitted primary procedures that satisfy the operational equivalences exactly."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import MEAS_IDS, PREP_IDS
from .gpt_core import DataMatrix
from .lp_solver import LinearProgram, solve

N_SECONDARY_PREPS = 6
N_SECONDARY_MEAS = 3

MEAS_CANDIDATES = ("M1", "M2", "M3", "M4", "not M4", "1", "0")
FULL_MEAS_CANDIDATES = MEAS_CANDIDATES + ("not M1", "not M2", "not M3")


class SecondaryLPError(RuntimeError):
    """The equivalence-restoring LP has no solution."""

    def __init__(self, message, status=None, residual=None):
        super().__init__(message)
        self.status = status
        self.residual = residual


@dataclass(frozen=True)
class PrepWeights:
    """u[k, j]: weight of primary preparation j in secondary preparation k."""

    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != 2 or u.shape[0] != N_SECONDARY_PREPS:
            raise ValueError("preparation weights are a 6 x n_primary grid")
        _check_stochastic(u)
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def closeness(self) -> float:
        return float(np.trace(self.u[:, :N_SECONDARY_PREPS]) / N_SECONDARY_PREPS)


@dataclass(frozen=True)
class MeasWeights:
    """v[t, k]: weight of candidate event k (see ``candidates``) in secondary M_t."""

    v: np.ndarray
    candidates: tuple = MEAS_CANDIDATES

    def __post_init__(self):
        v = np.array(self.v, dtype=float)
        if v.shape != (N_SECONDARY_MEAS, len(self.candidates)):
            raise ValueError("measurement weights are a 3 x n_candidates grid")
        _check_stochastic(v)
        v.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "candidates", tuple(self.candidates))

    @property
    def closeness(self) -> float:
        return float(np.trace(self.v[:, :N_SECONDARY_MEAS]) / N_SECONDARY_MEAS)


def _check_stochastic(w):
    if np.any(w < -1e-12):
        raise ValueError("mixture weights must be non-negative")
    if np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("mixture weights must sum to 1 in every row")


@dataclass(frozen=True)
class SecondaryResult:
    prep_weights: PrepWeights
    meas_weights: MeasWeights
    C_P: float
    C_M: float
    Ds: DataMatrix

    def to_dict(self) -> dict:
        return {
            "C_P": self.C_P,
            "C_M": self.C_M,
            "prep_weights": {"rows": list(self.Ds.col_ids),
                             "cols": list(PREP_IDS[:self.prep_weights.u.shape[1]]),
                             "u": self.prep_weights.u.tolist()},
            "meas_weights": {"rows": list(self.Ds.row_ids),
                             "cols": list(self.meas_weights.candidates),
                             "v": self.meas_weights.v.tolist()},
            "Ds": self.Ds.to_dict(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _normalize_rows(w):
    w = np.clip(w, 0.0, None)
    return w / w.sum(axis=1, keepdims=True)


def candidate_rows(P: np.ndarray, full: bool = False) -> np.ndarray:
    """Outcome-0 rows of the post-processed primary measurements, in
    ``MEAS_CANDIDATES`` (or ``FULL_MEAS_CANDIDATES``) order."""
    ones = np.ones(P.shape[1])
    rows = [P[0], P[1], P[2], P[3], 1.0 - P[3], ones, np.zeros_like(ones)]
    if full:
        rows += [1.0 - P[0], 1.0 - P[1], 1.0 - P[2]]
    return np.array(rows)


def _grid(Dp):
    P = Dp.as_float() if isinstance(Dp, DataMatrix) else np.asarray(Dp, dtype=float)
    if P.shape != (4, 8):
        raise ValueError("primary data must be a 4 x 8 matrix")
    return P


def build_secondary_preparations(Dp) -> tuple[PrepWeights, float]:
    """Maximise the mean diagonal weight subject to P^s_1 = P^s_2 = P^s_3.

    Variables are u[k, j] flattened row-major (k = secondary, j = primary).
    """
    P = _grid(Dp)
    n_prim = P.shape[1]
    n_var = N_SECONDARY_PREPS * n_prim
    rows, rhs = [], []
    for k in range(N_SECONDARY_PREPS):
        row = np.zeros(n_var)
        row[k * n_prim:(k + 1) * n_prim] = 1.0
        rows.append(row)
        rhs.append(1.0)
    # sum_b P^s_{t,b} - sum_b P^s_{1,b} = 0 on every measurement row, t = 2, 3
    for t in (1, 2):
        for i in range(P.shape[0]):
            row = np.zeros(n_var)
            for b in (0, 1):
                k_t, k_1 = 2 * t + b, b
                row[k_t * n_prim:(k_t + 1) * n_prim] += P[i]
                row[k_1 * n_prim:(k_1 + 1) * n_prim] -= P[i]
            rows.append(row)
            rhs.append(0.0)
    c = np.zeros(n_var)
    for k in range(N_SECONDARY_PREPS):
        c[k * n_prim + k] = 1.0 / N_SECONDARY_PREPS
    sol = solve(LinearProgram(c, np.array(rows), np.array(rhs)))
    if not sol.ok:
        raise SecondaryLPError(f"preparation LP is {sol.status}", sol.status)
    weights = PrepWeights(_normalize_rows(sol.x.reshape(N_SECONDARY_PREPS, n_prim)))
    return weights, weights.closeness


def build_secondary_measurements(Dp, full_candidates: bool = False) -> tuple[MeasWeights, float]:
    """Maximise the mean diagonal weight subject to (1/3) sum_t M^s_t = 1/2 on every column."""
    P = _grid(Dp)
    cand = candidate_rows(P, full_candidates)
    n_cand, n_cols = cand.shape
    n_var = N_SECONDARY_MEAS * n_cand
    rows, rhs = [], []
    for t in range(N_SECONDARY_MEAS):
        row = np.zeros(n_var)
        row[t * n_cand:(t + 1) * n_cand] = 1.0
        rows.append(row)
        rhs.append(1.0)
    for j in range(n_cols):
        rows.append(np.tile(cand[:, j], N_SECONDARY_MEAS) / N_SECONDARY_MEAS)
        rhs.append(0.5)
    c = np.zeros(n_var)
    for t in range(N_SECONDARY_MEAS):
        c[t * n_cand + t] = 1.0 / N_SECONDARY_MEAS
    sol = solve(LinearProgram(c, np.array(rows), np.array(rhs)))
    if not sol.ok:
        residual = cand[:3].mean(axis=0) - 0.5
        raise SecondaryLPError(
            f"measurement LP is {sol.status}; mean primary bias per column: {np.round(residual, 6).tolist()}",
            sol.status, residual)
    names = FULL_MEAS_CANDIDATES if full_candidates else MEAS_CANDIDATES
    weights = MeasWeights(_normalize_rows(sol.x.reshape(N_SECONDARY_MEAS, n_cand)), names)
    return weights, weights.closeness


def secondary_matrix(Dp, u: PrepWeights, v: MeasWeights) -> DataMatrix:
    """3 x 6 table s[t', (t, b)] = p(0 | M^s_t', P^s_{t,b}).

    Each entry is sum_j u[(t,b), j] * sum_k v[t', k] * candidate_k[j].
    """
    P = _grid(Dp)
    cand = candidate_rows(P, len(v.candidates) == len(FULL_MEAS_CANDIDATES))
    if u.u.shape[1] != P.shape[1]:
        raise ValueError("preparation weights do not match the primary columns")
    secondary_rows = v.v @ cand
    Ds = secondary_rows @ u.u.T
    Ds = np.where((Ds < 0) & (Ds > -1e-12), 0.0, Ds)
    Ds = np.where((Ds > 1) & (Ds < 1 + 1e-12), 1.0, Ds)
    return DataMatrix(Ds, None, MEAS_IDS[:3], PREP_IDS[:6])


def construct(Dp, full_candidates: bool = False) -> SecondaryResult:
    u, c_p = build_secondary_preparations(Dp)
    v, c_m = build_secondary_measurements(Dp, full_candidates)
    return SecondaryResult(u, v, c_p, c_m, secondary_matrix(Dp, u, v))
