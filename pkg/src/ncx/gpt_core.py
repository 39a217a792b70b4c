"""Operational statistics: probability tables, GPT states/effects, mixtures,
outcome post-processings and operational-equivalence checks.

Convention: a two-outcome measurement is represented only by its outcome-0
event; rows are measurements, columns are preparations.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import MEAS_IDS, PREP_IDS

CONSTRAINT_TOL = 1e-9
ALGEBRA_TOL = 1e-12


class InconsistentPairError(ValueError):
    """A state/effect pair predicts a probability outside [0, 1]."""


def _as_grid(values):
    """Float grid, or object grid when any entry is an exact Fraction."""
    if isinstance(values, np.ndarray) and values.dtype != object:
        arr = np.array(values, dtype=float)
    else:
        rows = [list(r) for r in values]
        if any(isinstance(x, Fraction) for r in rows for x in r):
            arr = np.empty((len(rows), len(rows[0]) if rows else 0), dtype=object)
            for i, r in enumerate(rows):
                for j, x in enumerate(r):
                    arr[i, j] = Fraction(x)
        else:
            arr = np.array(rows, dtype=float)
    if arr.ndim != 2:
        raise ValueError("expected a 2-d grid")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DataMatrix:
    """Outcome-0 probabilities, rows = measurements, columns = preparations.

    ``values`` may hold :class:`fractions.Fraction` entries (object dtype),
    which keeps ontological-model tables exact.
    """

    values: np.ndarray
    uncertainties: np.ndarray | None = None
    row_ids: tuple = ()
    col_ids: tuple = ()

    def __post_init__(self):
        vals = _as_grid(self.values)
        object.__setattr__(self, "values", vals)
        n_rows, n_cols = vals.shape
        if not self.row_ids:
            object.__setattr__(self, "row_ids", tuple(MEAS_IDS[:n_rows]) if n_rows <= 4
                               else tuple(f"M{i + 1}" for i in range(n_rows)))
        if not self.col_ids:
            object.__setattr__(self, "col_ids", tuple(PREP_IDS[:n_cols]) if n_cols <= 8
                               else tuple(f"P{j + 1}" for j in range(n_cols)))
        object.__setattr__(self, "row_ids", tuple(self.row_ids))
        object.__setattr__(self, "col_ids", tuple(self.col_ids))
        if len(self.row_ids) != n_rows or len(self.col_ids) != n_cols:
            raise ValueError("label count does not match grid shape")
        if not (np.all(vals >= 0) and np.all(vals <= 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.uncertainties is not None:
            unc = np.array(self.uncertainties, dtype=float)
            if unc.shape != vals.shape:
                raise ValueError("uncertainties must match the shape of values")
            if np.any(unc < 0) or not np.all(np.isfinite(unc)):
                raise ValueError("uncertainties must be finite and non-negative")
            unc.setflags(write=False)
            object.__setattr__(self, "uncertainties", unc)

    @property
    def shape(self):
        return self.values.shape

    def as_float(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def column(self, j) -> np.ndarray:
        return self.as_float()[:, j]

    def to_dict(self) -> dict:
        vals = self.as_float()
        return {
            "rows": list(self.row_ids),
            "cols": list(self.col_ids),
            "values": [[float(f"{x:.17g}") for x in row] for row in vals],
            "uncertainties": None if self.uncertainties is None
            else [[float(f"{x:.17g}") for x in row] for row in self.uncertainties],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "DataMatrix":
        return cls(
            values=np.array(data["values"], dtype=float),
            uncertainties=None if data.get("uncertainties") is None
            else np.array(data["uncertainties"], dtype=float),
            row_ids=tuple(data.get("rows") or ()),
            col_ids=tuple(data.get("cols") or ()),
        )

    @classmethod
    def from_json(cls, text: str) -> "DataMatrix":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GptState:
    """Normalized state vector ``(1, p(0|M_A), p(0|M_B), p(0|M_C))``."""

    components: tuple = field(default=(1.0, 0.5, 0.5, 0.5))

    def __post_init__(self):
        comps = tuple(float(x) for x in self.components)
        if len(comps) != 4:
            raise ValueError("GPT states have four components")
        if comps[0] != 1.0:
            raise ValueError("first component of a GPT state must be 1")
        if any(x < -CONSTRAINT_TOL or x > 1 + CONSTRAINT_TOL for x in comps[1:]):
            raise ValueError("fiducial probabilities must lie in [0, 1]")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_fiducials(cls, p1, p2, p3) -> "GptState":
        return cls((1.0, p1, p2, p3))

    def __array__(self, dtype=None, copy=None):
        return np.array(self.components, dtype=dtype or float)


@dataclass(frozen=True)
class GptEffect:
    components: tuple = field(default=(0.0, 0.0, 0.0, 0.0))

    def __post_init__(self):
        comps = tuple(float(x) for x in self.components)
        if len(comps) != 4:
            raise ValueError("GPT effects have four components")
        object.__setattr__(self, "components", comps)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.components, dtype=dtype or float)


UNIT_EFFECT = GptEffect((1.0, 0.0, 0.0, 0.0))
ZERO_EFFECT = GptEffect((0.0, 0.0, 0.0, 0.0))


def predict(effect: GptEffect, state: GptState, eps: float = CONSTRAINT_TOL) -> float:
    """Outcome probability ``effect . state``; no clamping is applied."""
    e = np.asarray(effect, dtype=float)
    s = np.asarray(state, dtype=float)
    if e.shape != (4,) or s.shape != (4,):
        raise ValueError("effect and state must be 4-vectors")
    value = float(e @ s)
    if value < -eps or value > 1 + eps:
        raise InconsistentPairError(f"predicted probability {value!r} outside [0, 1]")
    return value


def mix_states(weights: Sequence[float], states: Sequence[GptState]) -> GptState:
    """Convex combination of GPT states."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(states),):
        raise ValueError("one weight per state is required")
    if np.any(w < 0):
        raise ValueError("mixture weights must be non-negative")
    if abs(w.sum() - 1.0) > ALGEBRA_TOL:
        raise ValueError("mixture weights must sum to 1")
    mixed = w @ np.array([np.asarray(s, dtype=float) for s in states])
    mixed[0] = 1.0
    return GptState(tuple(mixed))


POST_PROCESSINGS = ("identity", "flip", "always0", "always1")


def post_process_effect(effect: GptEffect, kind: str) -> GptEffect:
    """Apply one of the four extremal binary post-processings to an outcome-0 event.

    ``flip`` returns the complementary event (unit - effect); ``always1`` the
    event that always occurs and ``always0`` the event that never occurs.
    """
    if kind == "identity":
        return effect
    if kind == "flip":
        return GptEffect(tuple(np.asarray(UNIT_EFFECT) - np.asarray(effect)))
    if kind == "always1":
        return UNIT_EFFECT
    if kind == "always0":
        return ZERO_EFFECT
    raise ValueError(f"unknown post-processing {kind!r}")


def post_process_row(row, kind: str) -> np.ndarray:
    """Same as :func:`post_process_effect` acting on a row of probabilities."""
    row = np.asarray(row, dtype=float)
    if kind == "identity":
        return row.copy()
    if kind == "flip":
        return 1.0 - row
    if kind == "always1":
        return np.ones_like(row)
    if kind == "always0":
        return np.zeros_like(row)
    raise ValueError(f"unknown post-processing {kind!r}")


def _prep_grid(D) -> np.ndarray:
    vals = D.as_float() if isinstance(D, DataMatrix) else np.asarray(D, dtype=float)
    if vals.ndim != 2 or vals.shape[1] not in (6, 8):
        raise ValueError("expected columns grouped as (t,0),(t,1) pairs for t = 1, 2, 3")
    return vals[:, :6]


def pair_averages(D) -> np.ndarray:
    """Rows x 3 grid of ½(col_{t,0} + col_{t,1}) for t = 1, 2, 3."""
    vals = _prep_grid(D)
    return 0.5 * (vals[:, 0::2] + vals[:, 1::2])


def check_prep_equivalence(D) -> float:
    """Largest disagreement between the three mixed preparations P_1, P_2, P_3.

    Extra supplementary columns (t = 4) are ignored.
    """
    avg = pair_averages(D)
    return float(np.max(avg.max(axis=1) - avg.min(axis=1)))


def check_coinflip_equivalence(rows) -> float:
    """Largest deviation of the uniform mixture of three rows from a fair coin."""
    rows = np.asarray(rows.as_float() if isinstance(rows, DataMatrix) else rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] != 3:
        raise ValueError("expected exactly three measurement rows")
    return float(np.max(np.abs(rows.mean(axis=0) - 0.5)))
