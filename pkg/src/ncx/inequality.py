"""The correlation quantity A, its noncontextual bound, and finite ontological models."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import MEAS_IDS, PREP_IDS
from .gpt_core import DataMatrix
from .lp_solver import LinearProgram, solve

MAIN_PREPS = PREP_IDS[:6]
MAIN_MEAS = MEAS_IDS[:3]
MIXED_PREPS = ("P1", "P2", "P3")
MSTAR = "M*"
MODEL_TOL = 1e-12


class BoundError(RuntimeError):
    pass


def _exact(x):
    return isinstance(x, (Fraction, int)) and not isinstance(x, bool)


def _parse_number(x):
    if isinstance(x, str):
        return Fraction(x)
    return x


def _format_number(x):
    if isinstance(x, Fraction):
        return str(x)
    return float(x)


@dataclass(frozen=True)
class OntologicalModel:
    """Finite ontic-state model.

    ``mu[prep]`` is a distribution over the ``n_lambda`` ontic states and
    ``xi[meas]`` the outcome-0 response for each ontic state. Entries may be
    floats or :class:`Fraction` (exact).
    """

    n_lambda: int
    mu: dict
    xi: dict

    def __post_init__(self):
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be at least 1")
        mu = {k: tuple(_parse_number(x) for x in v) for k, v in self.mu.items()}
        xi = {k: tuple(_parse_number(x) for x in v) for k, v in self.xi.items()}
        for name, dist in mu.items():
            if len(dist) != self.n_lambda:
                raise ValueError(f"mu[{name!r}] has the wrong length")
            if any(p < 0 for p in dist):
                raise ValueError(f"mu[{name!r}] has negative entries")
            total = sum(dist)
            if (total != 1) if all(map(_exact, dist)) else abs(total - 1) > MODEL_TOL:
                raise ValueError(f"mu[{name!r}] does not sum to 1")
        for name, resp in xi.items():
            if len(resp) != self.n_lambda:
                raise ValueError(f"xi[{name!r}] has the wrong length")
            if any(r < 0 or r > 1 for r in resp):
                raise ValueError(f"xi[{name!r}] must lie in [0, 1]")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "xi", xi)

    @property
    def exact(self) -> bool:
        return all(_exact(x) for v in (*self.mu.values(), *self.xi.values()) for x in v)

    def to_dict(self) -> dict:
        return {
            "n_lambda": self.n_lambda,
            "mu": {k: [_format_number(x) for x in v] for k, v in self.mu.items()},
            "xi": {k: [_format_number(x) for x in v] for k, v in self.xi.items()},
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "OntologicalModel":
        return cls(int(data["n_lambda"]), dict(data["mu"]), dict(data["xi"]))

    @classmethod
    def from_json(cls, text: str) -> "OntologicalModel":
        return cls.from_dict(json.loads(text))

    def mixed_mu(self, t: int) -> tuple:
        """Distribution of the equal mixture P_t of P_{t,0} and P_{t,1}."""
        half = Fraction(1, 2) if self.exact else 0.5
        d0, d1 = self.mu[f"P{t},0"], self.mu[f"P{t},1"]
        return tuple(half * (a + b) for a, b in zip(d0, d1))

    def mstar_response(self) -> tuple:
        """Outcome-0 response of the uniform mixture of M_1, M_2, M_3."""
        third = Fraction(1, 3) if self.exact else 1.0 / 3.0
        return tuple(third * sum(self.xi[m][k] for m in MAIN_MEAS) for k in range(self.n_lambda))


@dataclass(frozen=True)
class AValue:
    value: float
    per_term: tuple


def compute_A(Ds) -> AValue:
    """Mean of p(X = b | M_t, P_{t,b}) over t = 1..3, b = 0, 1."""
    vals = Ds.values if isinstance(Ds, DataMatrix) else np.asarray(Ds)
    if vals.shape[0] < 3 or vals.shape[1] < 6:
        raise ValueError("need at least 3 measurement rows and 6 preparation columns")
    terms = []
    for t in range(3):
        terms.append(vals[t, 2 * t])
        terms.append(1 - vals[t, 2 * t + 1])
    if all(_exact(x) for x in terms):
        terms = [Fraction(x) for x in terms]
        return AValue(sum(terms) / 6, tuple(terms))
    terms = [float(x) for x in terms]
    return AValue(float(np.mean(terms)), tuple(terms))


def model_statistics(m: OntologicalModel, preps=None, meas=None) -> DataMatrix:
    """p(0 | M, P) = sum_lambda xi(0 | M, lambda) mu(lambda | P); rows = meas."""
    preps = tuple(preps or [p for p in PREP_IDS if p in m.mu])
    meas = tuple(meas or [k for k in MEAS_IDS if k in m.xi])
    grid = [[sum(x * w for x, w in zip(m.xi[k], m.mu[p])) for p in preps] for k in meas]
    return DataMatrix(grid, None, meas, preps)


def model_table(m: OntologicalModel) -> dict:
    """Operational table laid out like the published ones.

    Rows: P_{t,b} then the mixtures P_t; columns: M_1..M_3 then M_*.
    """
    dists = {p: m.mu[p] for p in MAIN_PREPS}
    dists.update({f"P{t}": m.mixed_mu(t) for t in (1, 2, 3)})
    responses = {k: m.xi[k] for k in MAIN_MEAS}
    responses[MSTAR] = m.mstar_response()
    cols = list(MAIN_MEAS) + [MSTAR]
    rows = list(MAIN_PREPS) + list(MIXED_PREPS)
    cells = [[sum(x * w for x, w in zip(responses[k], dists[p])) for k in cols] for p in rows]
    return {"preps": rows, "meas": cols, "cells": cells}


def check_model_noncontextuality(m: OntologicalModel, tol: float = MODEL_TOL):
    """(preparation-NC, measurement-NC, residuals) for the equivalences
    P_1 ~ P_2 ~ P_3 and M_* ~ fair coin."""
    mixed = [m.mixed_mu(t) for t in (1, 2, 3)]
    prep_res = max(abs(mixed[i][k] - mixed[j][k])
                   for i, j in itertools.combinations(range(3), 2) for k in range(m.n_lambda))
    meas_res = max(abs(r - Fraction(1, 2)) if _exact(r) else abs(r - 0.5) for r in m.mstar_response())
    residuals = {"preparation": float(prep_res), "measurement": float(meas_res)}
    return bool(prep_res <= tol), bool(meas_res <= tol), residuals


# -- the bound ---------------------------------------------------------------

def polygon_vertices() -> list:
    """Vertices of {xi in [0,1]^3 : mean(xi) = 1/2}, in exact arithmetic.

    Each vertex lies on a cube edge (two coordinates at 0 or 1).
    """
    target = Fraction(3, 2)
    found = set()
    for free in range(3):
        fixed = [i for i in range(3) if i != free]
        for values in itertools.product((0, 1), repeat=2):
            x = target - sum(values)
            if 0 <= x <= 1:
                v = [Fraction(0)] * 3
                v[free] = x
                for i, val in zip(fixed, values):
                    v[i] = Fraction(val)
                found.add(tuple(v))
    return sorted(found, reverse=True)


def vertex_score(v) -> Fraction:
    """(1/3) sum_t max(xi_t, 1 - xi_t): the best per-ontic-state correlation."""
    return sum(max(x, 1 - x) for x in v) / 3


def noncontextual_bound() -> Fraction:
    """Exact maximum of A over noncontextual models (5/6)."""
    return max(vertex_score(v) for v in polygon_vertices())


def max_noncontextual_A(n_lambda: int = 6):
    """Maximise A over preparation-noncontextual distributions on ontic states
    whose responses sit at the polygon vertices (cycled when n_lambda > 6).

    Returns the optimum and a witness model.
    """
    if n_lambda < 6:
        raise ValueError("need at least 6 ontic states to cover the polygon vertices")
    verts = polygon_vertices()
    resp = np.array([[float(x) for x in verts[k % 6]] for k in range(n_lambda)])
    n_var = 6 * n_lambda

    def block(k):
        return slice(k * n_lambda, (k + 1) * n_lambda)

    rows, rhs = [], []
    for k in range(6):
        row = np.zeros(n_var)
        row[block(k)] = 1.0
        rows.append(row)
        rhs.append(1.0)
    for t in (1, 2):
        for lam in range(n_lambda):
            row = np.zeros(n_var)
            row[2 * t * n_lambda + lam] += 1.0
            row[(2 * t + 1) * n_lambda + lam] += 1.0
            row[lam] -= 1.0
            row[n_lambda + lam] -= 1.0
            rows.append(row)
            rhs.append(0.0)
    c = np.zeros(n_var)
    for t in range(3):
        c[block(2 * t)] = resp[:, t] / 6
        c[block(2 * t + 1)] = (1 - resp[:, t]) / 6
    sol = solve(LinearProgram(c, np.array(rows), np.array(rhs)))
    if not sol.ok:
        raise BoundError(f"tightness LP is {sol.status}")
    mu = sol.x.reshape(6, n_lambda)
    mu = mu / mu.sum(axis=1, keepdims=True)
    witness = OntologicalModel(
        n_lambda,
        {p: tuple(float(x) for x in mu[k]) for k, p in enumerate(MAIN_PREPS)},
        {m: tuple(float(x) for x in resp[:, t]) for t, m in enumerate(MAIN_MEAS)},
    )
    return sol.value, witness


# -- example models ----------------------------------------------------------

def saturating_model() -> OntologicalModel:
    """Noncontextual model on the six polygon vertices reaching A = 5/6.

    P_{t,0} puts 1/3 on each vertex where M_t fires surely and 1/6 on each
    vertex where it responds 1/2; P_{t,1} mirrors this. Weighting by response
    value as (a, 5/6 - 2a, a - 1/3) reproduces every row of the table for
    1/3 <= a <= 5/12, but the mixtures P_1, P_2, P_3 only coincide at a = 1/3.
    """
    verts = polygon_vertices()
    weight_by_response = {Fraction(1): Fraction(1, 3), Fraction(1, 2): Fraction(1, 6),
                          Fraction(0): Fraction(0)}
    mu = {}
    for t in range(3):
        mu[f"P{t + 1},0"] = tuple(weight_by_response[v[t]] for v in verts)
        mu[f"P{t + 1},1"] = tuple(weight_by_response[1 - v[t]] for v in verts)
    xi = {m: tuple(v[t] for v in verts) for t, m in enumerate(MAIN_MEAS)}
    return OntologicalModel(len(verts), mu, xi)


def contextual_example_model() -> OntologicalModel:
    """Preparation-noncontextual, measurement-contextual model with A = 9/10.

    Ontic states are the eight deterministic assignments (xi_1, xi_2, xi_3).
    P_{t,0} puts 1/10 on (0,0,0) and 3/10 on each other assignment with
    xi_t = 1 except (1,1,1); P_{t,1} is its bit-flipped image.
    """
    states = list(itertools.product((0, 1), repeat=3))
    mu = {}
    for t in range(3):
        dist0, dist1 = [], []
        for s in states:
            flipped = tuple(1 - x for x in s)
            dist0.append(_contextual_weight(s, t))
            dist1.append(_contextual_weight(flipped, t))
        mu[f"P{t + 1},0"] = tuple(dist0)
        mu[f"P{t + 1},1"] = tuple(dist1)
    xi = {m: tuple(Fraction(s[t]) for s in states) for t, m in enumerate(MAIN_MEAS)}
    return OntologicalModel(len(states), mu, xi)


def _contextual_weight(state, t):
    if state == (0, 0, 0):
        return Fraction(1, 10)
    if state[t] == 1 and state != (1, 1, 1):
        return Fraction(3, 10)
    return Fraction(0)


def random_noncontextual_model(rng: np.random.Generator, n_lambda: int) -> OntologicalModel:
    """Random model satisfying both noncontextuality constraints.

    Responses are random points of the vertex polygon; the common mixture
    nu = mu(.|P_t) is symmetric Dirichlet and is split as
    mu(.|P_{t,0}) = 2 nu g, mu(.|P_{t,1}) = 2 nu (1 - g) for a random
    g in [0, 1]^Lambda rescaled so that sum(nu g) = 1/2.
    """
    verts = np.array([[float(x) for x in v] for v in polygon_vertices()])
    weights = rng.dirichlet(np.ones(len(verts)), size=n_lambda)
    resp = np.clip(weights @ verts, 0.0, 1.0)
    nu = rng.dirichlet(np.ones(n_lambda))
    mu = {}
    for t in range(3):
        f = rng.random(n_lambda)
        s = float(nu @ f)
        g = f / (2 * s) if s > 0.5 else 1 - (1 - f) / (2 * (1 - s))
        mu[f"P{t + 1},0"] = tuple(2 * nu * g)
        mu[f"P{t + 1},1"] = tuple(2 * nu * (1 - g))
    xi = {m: tuple(resp[:, t]) for t, m in enumerate(MAIN_MEAS)}
    return OntologicalModel(n_lambda, mu, xi)


def table_from_fixture(data: dict) -> dict:
    return {"preps": list(data["preps"]), "meas": list(data["meas"]),
            "cells": [[Fraction(x) for x in row] for row in data["cells"]]}
