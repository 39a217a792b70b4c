import itertools
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncx.gpt_core import DataMatrix
from ncx.inequality import (MAIN_MEAS, MAIN_PREPS, AValue, OntologicalModel,
                            check_model_noncontextuality, compute_A, contextual_example_model,
                            max_noncontextual_A, model_statistics, model_table, noncontextual_bound,
                            polygon_vertices, random_noncontextual_model, saturating_model,
                            table_from_fixture, vertex_score)
from ncx.pipeline import load_fixture
from ncx.quantum_sim import ideal_procedures, true_matrix

F = Fraction


def stats(m):
    return model_statistics(m, MAIN_PREPS, MAIN_MEAS)


def test_compute_A_examples():
    D = true_matrix(*ideal_procedures()).as_float()[:3, :6]
    a = compute_A(D)
    assert a.value == pytest.approx(1.0, abs=1e-12)
    assert len(a.per_term) == 6
    assert compute_A(stats(saturating_model())).value == F(5, 6)
    assert compute_A(stats(contextual_example_model())).value == F(9, 10)
    with pytest.raises(ValueError):
        compute_A(np.zeros((2, 6)))


@given(st.lists(st.floats(0, 1), min_size=18, max_size=18), st.permutations(range(3)))
def test_compute_A_mean_and_relabeling(cells, perm):
    D = np.array(cells).reshape(3, 6)
    a = compute_A(D)
    assert a.value == pytest.approx(np.mean(a.per_term), abs=1e-12)
    cols = [2 * p + b for p in perm for b in (0, 1)]
    assert compute_A(D[list(perm)][:, cols]).value == pytest.approx(a.value, abs=1e-12)


@given(st.lists(st.floats(0, 1), min_size=18, max_size=18),
       st.lists(st.floats(0, 1), min_size=18, max_size=18), st.floats(0, 1))
def test_compute_A_is_affine(x, y, w):
    X, Y = np.array(x).reshape(3, 6), np.array(y).reshape(3, 6)
    mix = compute_A(w * X + (1 - w) * Y).value
    assert mix == pytest.approx(w * compute_A(X).value + (1 - w) * compute_A(Y).value, abs=1e-12)


def test_model_validation():
    with pytest.raises(ValueError):
        OntologicalModel(2, {"P1,0": (0.5, 0.6)}, {})
    with pytest.raises(ValueError):
        OntologicalModel(2, {"P1,0": (1.5, -0.5)}, {})
    with pytest.raises(ValueError):
        OntologicalModel(2, {}, {"M1": (0.5, 1.2)})
    with pytest.raises(ValueError):
        OntologicalModel(2, {"P1,0": (1.0,)}, {})


def test_deterministic_single_state_model():
    m = OntologicalModel(1, {p: (1,) for p in MAIN_PREPS}, {k: (1,) for k in MAIN_MEAS})
    assert np.all(stats(m).as_float() == 1)


def test_polygon_vertices_are_the_permutations():
    verts = polygon_vertices()
    expected = sorted(set(itertools.permutations((F(1), F(1, 2), F(0)))), reverse=True)
    assert verts == expected
    assert verts[0] == (1, F(1, 2), 0)
    assert vertex_score((1, F(1, 2), 0)) == F(5, 6)
    assert noncontextual_bound() == F(5, 6)
    for det in itertools.product((0, 1), repeat=3):
        assert sum(det) * F(1, 3) != F(1, 2)


def test_lp_tightness_agrees_with_enumeration():
    for n in (6, 7, 9, 12):
        value, witness = max_noncontextual_A(n)
        assert value == pytest.approx(float(noncontextual_bound()), abs=1e-9)
        assert check_model_noncontextuality(witness, 1e-9)[:2] == (True, True)
        assert compute_A(stats(witness)).value == pytest.approx(5 / 6, abs=1e-9)
    with pytest.raises(ValueError):
        max_noncontextual_A(5)


def test_saturating_row_solves_its_linear_system():
    m = saturating_model()
    row = m.mu["P1,0"]
    assert row == (F(1, 3), F(1, 3), F(1, 6), F(1, 6), 0, 0)
    verts = polygon_vertices()
    got = [sum(w * v[t] for w, v in zip(row, verts)) for t in range(3)]
    assert got == [F(5, 6), F(1, 3), F(1, 3)]


def test_saturating_model_reproduces_first_table():
    m = saturating_model()
    fixture = table_from_fixture(load_fixture("saturating_table.json"))
    assert model_table(m)["cells"] == fixture["cells"]
    assert check_model_noncontextuality(m) == (True, True, {"preparation": 0.0, "measurement": 0.0})


@pytest.mark.parametrize("a", [F(3, 8), F(5, 12)])
def test_response_weighted_variants_match_rows_but_not_mixtures(a):
    # weights (a, 5/6 - 2a, a - 1/3) by response value 1, 1/2, 0
    verts = polygon_vertices()
    w = {F(1): a, F(1, 2): F(5, 6) - 2 * a, F(0): a - F(1, 3)}
    mu = {}
    for t in range(3):
        mu[f"P{t + 1},0"] = tuple(w[v[t]] for v in verts)
        mu[f"P{t + 1},1"] = tuple(w[1 - v[t]] for v in verts)
    m = OntologicalModel(6, mu, saturating_model().xi)
    assert stats(m).values.tolist() == stats(saturating_model()).values.tolist()
    assert check_model_noncontextuality(m)[:2] == (False, True)


def test_contextual_model_reproduces_second_table():
    m = contextual_example_model()
    fixture = table_from_fixture(load_fixture("contextual_table.json"))
    table = model_table(m)
    assert table["preps"] == fixture["preps"] and table["meas"] == fixture["meas"]
    assert table["cells"] == fixture["cells"]
    prep_nc, meas_nc, res = check_model_noncontextuality(m)
    assert (prep_nc, meas_nc) == (True, False)
    assert res["measurement"] == 0.5


def test_preparation_contextuality_detected():
    m = saturating_model()
    mu = dict(m.mu)
    mu["P1,0"] = (1, 0, 0, 0, 0, 0)
    bad = OntologicalModel(6, mu, m.xi)
    assert check_model_noncontextuality(bad)[0] is False


def test_shipped_model_files_match_constructors():
    for name, ctor in (("saturating_model.json", saturating_model),
                       ("contextual_model.json", contextual_example_model)):
        loaded = OntologicalModel.from_dict(load_fixture(name))
        assert loaded == ctor()


def test_model_json_round_trip():
    m = contextual_example_model()
    assert OntologicalModel.from_json(m.to_json()) == m
    f = random_noncontextual_model(np.random.default_rng(1), 7)
    back = OntologicalModel.from_json(f.to_json())
    assert all(np.allclose(back.mu[k], f.mu[k], atol=0) for k in f.mu)


def test_random_noncontextual_models_respect_bound():
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(1000):
        m = random_noncontextual_model(rng, int(rng.integers(1, 13)))
        prep_nc, meas_nc, _ = check_model_noncontextuality(m)
        assert prep_nc and meas_nc
        a = compute_A(stats(m)).value
        assert a <= 5 / 6 + 1e-12
        mstar = model_table(m)
        assert np.allclose(np.array(mstar["cells"], dtype=float)[:, 3], 0.5, atol=1e-12)
        worst = max(worst, a)
    assert worst > 0.5
