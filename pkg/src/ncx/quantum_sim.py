"""Qubit ground truth and noisy count data for the six-preparation,
three-measurement scenario plus the two supplementary y-axis procedures."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .gpt_core import DataMatrix

BALL_TOL = 1e-12

N1 = np.array([0.0, 0.0, 1.0])
N2 = np.array([np.sqrt(3) / 2, 0.0, -0.5])
N3 = np.array([-np.sqrt(3) / 2, 0.0, -0.5])
Y_AXIS = np.array([0.0, 1.0, 0.0])
AXES = (N1, N2, N3, Y_AXIS)


@dataclass(frozen=True)
class BlochState:
    r: tuple

    def __post_init__(self):
        r = tuple(float(x) for x in self.r)
        if len(r) != 3:
            raise ValueError("Bloch vectors have three components")
        if np.linalg.norm(r) > 1 + BALL_TOL:
            raise ValueError(f"Bloch vector {r} lies outside the unit ball")
        object.__setattr__(self, "r", r)

    @property
    def vec(self) -> np.ndarray:
        return np.array(self.r)


@dataclass(frozen=True)
class BlochEffect:
    """Effect E = ½(e0·I + e·σ), valid iff |e| <= e0 <= 2 - |e|."""

    e0: float
    e: tuple

    def __post_init__(self):
        e = tuple(float(x) for x in self.e)
        e0 = float(self.e0)
        if len(e) != 3:
            raise ValueError("effect vectors have three spatial components")
        norm = np.linalg.norm(e)
        if e0 < -BALL_TOL or e0 > 2 + BALL_TOL or norm > e0 + BALL_TOL or norm > 2 - e0 + BALL_TOL:
            raise ValueError(f"({e0}, {e}) is not a valid effect")
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "e0", e0)

    @property
    def vec(self) -> np.ndarray:
        return np.array(self.e)


@dataclass(frozen=True)
class NoiseModel:
    """Systematic imperfections of the preparation and measurement devices.

    Applied as: shrink (depolarize states, sharpness and bias on effects), then
    a common rotation of all states relative to the measurements, then an
    independent small random rotation of every procedure.
    """

    depolarize_v: float = 1.0
    rotation: tuple = (0.0, 0.0, 0.0)
    effect_sharpness: float = 1.0
    effect_bias: float = 0.0
    per_procedure_jitter: float = 0.0

    def __post_init__(self):
        if not 0 <= self.depolarize_v <= 1:
            raise ValueError("depolarize_v must lie in [0, 1]")
        if not 0 <= self.effect_sharpness <= 1:
            raise ValueError("effect_sharpness must lie in [0, 1]")
        if self.per_procedure_jitter < 0:
            raise ValueError("per_procedure_jitter must be non-negative")
        if len(self.rotation) != 3:
            raise ValueError("rotation takes three Euler angles")
        object.__setattr__(self, "rotation", tuple(float(a) for a in self.rotation))

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseModel":
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rotation"] = list(self.rotation)
        return d


# Calibrated so that primary probabilities deviate from ideal by ~0.01.
DEFAULT_NOISE = NoiseModel(
    depolarize_v=0.998,
    rotation=(0.0, 0.0, 0.0),
    effect_sharpness=0.998,
    effect_bias=0.001,
    per_procedure_jitter=0.005,
)


@dataclass(frozen=True)
class CountTable:
    n0: np.ndarray
    n1: np.ndarray
    row_ids: tuple = ()
    col_ids: tuple = ()

    def __post_init__(self):
        n0 = np.array(self.n0, dtype=np.int64)
        n1 = np.array(self.n1, dtype=np.int64)
        if n0.shape != n1.shape or n0.ndim != 2:
            raise ValueError("n0 and n1 must be grids of equal shape")
        if np.any(n0 < 0) or np.any(n1 < 0):
            raise ValueError("counts must be non-negative")
        if np.any(n0 + n1 == 0):
            raise ValueError("every cell needs at least one detection")
        for a in (n0, n1):
            a.setflags(write=False)
        object.__setattr__(self, "n0", n0)
        object.__setattr__(self, "n1", n1)

    @property
    def totals(self) -> np.ndarray:
        return self.n0 + self.n1

    def to_dict(self) -> dict:
        return {"rows": list(self.row_ids), "cols": list(self.col_ids),
                "n0": self.n0.tolist(), "n1": self.n1.tolist()}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "CountTable":
        return cls(np.array(data["n0"]), np.array(data["n1"]),
                   tuple(data.get("rows") or ()), tuple(data.get("cols") or ()))


def ideal_procedures():
    """Eigenstates of σ·n_t (b=0 for +n_t) and of σ·y, with the sharp +n_t
    projectors as the outcome-0 events of M_1..M_4."""
    states = []
    for axis in AXES:
        states.append(BlochState(tuple(axis)))
        states.append(BlochState(tuple(-axis)))
    effects = [BlochEffect(1.0, tuple(axis)) for axis in AXES]
    return states, effects


def born(effect: BlochEffect, state: BlochState) -> float:
    p = 0.5 * (effect.e0 + float(effect.vec @ state.vec))
    if p < -BALL_TOL or p > 1 + BALL_TOL:
        raise ValueError(f"Born probability {p} outside [0, 1]")
    return min(max(p, 0.0), 1.0)


def rotate(states, effects, rot: Rotation):
    """Rotate every state and effect by the same rotation."""
    new_states = [BlochState(tuple(rot.apply(s.vec))) for s in states]
    new_effects = [BlochEffect(e.e0, tuple(rot.apply(e.vec))) for e in effects]
    return new_states, new_effects


def _clip_ball(v):
    n = np.linalg.norm(v)
    return v if n <= 1 else v / n


def apply_noise(states, effects, model: NoiseModel, seed=None):
    """Noisy copies of ``states`` and ``effects``; deterministic given ``seed``."""
    rng = np.random.default_rng(seed)
    out_states = [model.depolarize_v * s.vec for s in states]
    out_effects = []
    for e in effects:
        e0 = e.e0 + model.effect_bias
        vec = model.effect_sharpness * e.vec
        norm = np.linalg.norm(vec)
        if e0 < 0 or e0 > 2 or norm > e0 + BALL_TOL or norm > 2 - e0 + BALL_TOL:
            raise ValueError(
                f"noise parameters push effect ({e0:.6g}, |e|={norm:.6g}) outside the effect cone")
        out_effects.append((e0, vec))

    global_rot = Rotation.from_euler("zyz", model.rotation)
    out_states = [global_rot.apply(v) for v in out_states]

    if model.per_procedure_jitter > 0:
        sigma = model.per_procedure_jitter
        out_states = [Rotation.from_rotvec(rng.normal(0.0, sigma, 3)).apply(v) for v in out_states]
        out_effects = [(e0, Rotation.from_rotvec(rng.normal(0.0, sigma, 3)).apply(vec))
                       for e0, vec in out_effects]

    return ([BlochState(tuple(_clip_ball(v))) for v in out_states],
            [BlochEffect(e0, tuple(vec)) for e0, vec in out_effects])


def true_matrix(states, effects) -> DataMatrix:
    if len(states) != 8 or len(effects) != 4:
        raise ValueError("expected 8 preparations and 4 measurements")
    values = np.array([[born(e, s) for s in states] for e in effects])
    return DataMatrix(values)


def uncertainty_floor(r, n):
    """Binomial standard error, floored at 1/(2N) so weights stay finite at r in {0, 1}."""
    r = np.asarray(r, dtype=float)
    n = np.asarray(n, dtype=float)
    return np.maximum(np.sqrt(r * (1 - r) / n), 1.0 / (2.0 * n))


def make_rng(seed, name: str = "PCG64") -> np.random.Generator:
    bit_gen = getattr(np.random, name, None)
    if bit_gen is None or not isinstance(bit_gen, type) or not issubclass(bit_gen, np.random.BitGenerator):
        raise ValueError(f"unknown bit generator {name!r}")
    return np.random.Generator(bit_gen(seed))


def sample_counts(true: DataMatrix, mean_total: int, seed=None, *,
                  on_zero: str = "resample", rng_name: str = "PCG64"):
    """Poisson total per cell, binomial split into outcome 0 / outcome 1.

    Returns the count table and the raw frequency matrix with uncertainties.
    """
    if mean_total < 1:
        raise ValueError("mean_total must be at least 1")
    if on_zero not in ("resample", "error"):
        raise ValueError("on_zero must be 'resample' or 'error'")
    rng = make_rng(seed, rng_name)
    p = true.as_float()
    totals = rng.poisson(mean_total, size=p.shape)
    while np.any(totals == 0):
        if on_zero == "error":
            raise ValueError("a cell received zero detections")
        mask = totals == 0
        totals[mask] = rng.poisson(mean_total, size=int(mask.sum()))
    n0 = rng.binomial(totals, p)
    counts = CountTable(n0, totals - n0, true.row_ids, true.col_ids)
    r = n0 / totals
    raw = DataMatrix(r, uncertainty_floor(r, totals), true.row_ids, true.col_ids)
    return counts, raw


def _random_direction(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_procedures(rng: np.random.Generator, n_states: int = 8, n_effects: int = 4):
    """Generic qubit procedures: states uniform in the Bloch ball, effects
    uniform in e0 with spatial part inside the double cone."""
    states = [BlochState(tuple(_random_direction(rng) * rng.random() ** (1 / 3)))
              for _ in range(n_states)]
    effects = []
    for _ in range(n_effects):
        e0 = rng.uniform(0.0, 2.0)
        radius = min(e0, 2.0 - e0) * rng.random()
        effects.append(BlochEffect(e0, tuple(_random_direction(rng) * radius)))
    return states, effects
