import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rulefuzz import scenarios
from rulefuzz.autodiff import Graph, forward
from rulefuzz.dsl import load
from rulefuzz.fuzzify import (CompileError, FuzzConfig, UnknownQualifier, classify_head, compile_bundled,
                              fuzzify, model_from_json, model_to_json, param_count, rbf_grid, rbf_sigma,
                              t_above, t_below, t_categories, t_conj, t_disj, t_neg, t_rbf1d, t_rbf2d,
                              t_strict_gate)
from rulefuzz.strict import Oracle

import gradblocks
import oracles

S5 = 0.993307


def value(build, inputs=None, params=()):
    g = Graph()
    out = build(g)
    return forward(g, inputs or {}, np.asarray(params, dtype=float))[out]


def consts(g, xs):
    return [g.const(x) for x in xs]


def test_strict_gate():
    assert value(lambda g: t_strict_gate(g, True)) == 1.0
    assert value(lambda g: t_strict_gate(g, False)) == 0.0


def test_conj_examples():
    assert value(lambda g: t_conj(g, consts(g, [1, 1, 1]), 10)) == pytest.approx(S5, abs=1e-6)
    assert value(lambda g: t_conj(g, consts(g, [1, 1, 0.5]), 10)) == 0.5


def test_neg():
    assert value(lambda g: t_neg(g, g.const(1.0))) == 0.0


def test_threshold_examples():
    mid = value(lambda g: t_above(g, g.const(50.0), 0, 100, g.param(0), 10), params=[0.5])
    top = value(lambda g: t_above(g, g.const(100.0), 0, 100, g.param(0), 10), params=[0.5])
    assert mid == 0.5
    assert top == pytest.approx(S5, abs=1e-6)


def test_rbf1d_examples():
    zero = value(lambda g: t_rbf1d(g, g.input("x"), 0, 1, rbf_grid(20), rbf_sigma(20), g.param(0, (20,)),
                                   g.param(20)), {"x": np.linspace(-1, 2, 7)}, np.zeros(21))
    assert np.all(zero == 0.5)
    mu = rbf_grid(2)
    assert list(mu) == [0.0, 1.0] and rbf_sigma(2) == 1.0
    v = value(lambda g: t_rbf1d(g, g.const(0.0), 0, 1, mu, 1.0, g.param(0, (2,)), g.param(2)),
              params=[4, 0, -2])
    assert v == pytest.approx(0.880797, abs=1e-6)
    assert v == pytest.approx(oracles.rbf1d(0.0, [0, 1], 1.0, [4, 0], -2), abs=1e-15)


def test_rbf_grid_single_center():
    assert list(rbf_grid(1)) == [0.5] and rbf_sigma(1) == 1.0


def test_rbf2d_example():
    axis = rbf_grid(2)
    mu = np.array([(a, b) for a in axis for b in axis])
    v = value(lambda g: t_rbf2d(g, g.const(0.0), g.const(0.0), (0, 0), (1, 1), mu, 1.0,
                                g.param(0, (4,)), g.param(4)), params=[4, 0, 0, 0, -2])
    assert v == pytest.approx(0.880797, abs=1e-6)
    zero = value(lambda g: t_rbf2d(g, g.const(0.3), g.const(0.9), (0, 0), (1, 1), mu, 1.0,
                                   g.param(0, (4,)), g.param(4)), params=np.zeros(5))
    assert zero == 0.5


def test_categories_example():
    def build(g):
        return t_categories(g, g.input("x"), g.param(0, (2, 1)), g.param(2, (1,)), g.param(3, (1,)), g.param(4))
    v = value(build, {"x": np.array([[1.0, 0.0]])}, [1, 0, 0, 1, -0.5])
    assert v[0] == pytest.approx(0.622459, abs=1e-6)
    assert value(build, {"x": np.array([[1.0, 0.0]])}, np.zeros(5))[0] == 0.5


def test_classify_head():
    logits = np.array([[0.3, -1.2, 2.0, 0.7]])
    slow = [False, False, True, True]

    def probs(gate):
        return value(lambda g: classify_head(g, g.input("o"), g.input("g"), slow),
                     {"o": logits, "g": np.array([gate])})

    plain = np.exp(logits) / np.exp(logits).sum()
    assert np.allclose(probs(0.0), plain, atol=1e-15)
    shifted = np.array([[0.0, 0.0, 3.0, 1.7]])
    assert np.allclose(probs(1.0), np.exp(shifted) / np.exp(shifted).sum(), atol=1e-15)
    two = value(lambda g: classify_head(g, g.input("o"), g.input("g"), [True, False]),
                {"o": np.zeros((1, 2)), "g": np.array([1.0])})
    assert two[0] == pytest.approx([0.731059, 0.268941], abs=1e-6)


# -- algebraic properties ---------------------------------------------------------------

unit = st.floats(0, 1)


@settings(max_examples=1000, deadline=None)
@given(st.lists(unit, min_size=2, max_size=5), st.floats(1.01, 30))
def test_de_morgan(xs, p):
    g = Graph()
    kids = consts(g, xs)
    d = t_disj(g, kids, p)
    c = t_neg(g, t_conj(g, [t_neg(g, k) for k in kids], p))
    vals = forward(g, {}, np.zeros(0))
    assert abs(vals[d] - vals[c]) < 1e-12


@settings(max_examples=1000, deadline=None)
@given(st.floats(-100, 200), st.floats(0, 1), st.floats(1.01, 30))
def test_threshold_complementarity(x, w, p):
    g = Graph()
    xin, wt = g.const(x), g.param(0)
    a, b = t_above(g, xin, 0, 100, wt, p), t_below(g, xin, 0, 100, wt, p)
    vals = forward(g, {}, np.array([w]))
    assert vals[a] + vals[b] == 1.0


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.floats(0.05, 0.95), min_size=2, max_size=4), st.integers(0, 3), st.floats(1e-3, 0.05),
       st.sampled_from(["conj", "disj"]))
def test_connective_monotonic(xs, i, delta, kind):
    i %= len(xs)
    hi = list(xs)
    hi[i] += delta
    f = t_conj if kind == "conj" else t_disj
    lo_v = value(lambda g: f(g, consts(g, xs), 3.0))
    hi_v = value(lambda g: f(g, consts(g, hi), 3.0))
    assert hi_v > lo_v
    # and reference formula agrees
    ref = oracles.conj if kind == "conj" else oracles.disj
    assert lo_v == pytest.approx(ref(xs, 3.0), abs=1e-15)


def test_threshold_boundary_inside_bounds():
    # the decision boundary x* solves xhat = w_t, so w_t in [0,1] puts x* in [min, max]
    for w in np.linspace(0, 1, 11):
        xstar = 10 + w * (120 - 10)
        v = value(lambda g: t_above(g, g.const(xstar), 10, 120, g.param(0), 10), params=[w])
        assert v == pytest.approx(0.5, abs=1e-12) and 10 <= xstar <= 120


# -- compiled models --------------------------------------------------------------------

def test_param_counts():
    assert param_count(compile_bundled("industry", "strict")) == 0
    assert param_count(compile_bundled("industry", "time-ab")) == 2
    assert param_count(compile_bundled("industry", "time-right")) == 21
    model = compile_bundled("industry", "all")
    assert param_count(model) == 21 + 3 * 401 + 5 == 1229
    closed_form = sum(s.descr.param_count(len(s.qualifier_values) or 1) for s in model.sites)
    assert closed_form == 1229


def test_one_block_per_site():
    model = compile_bundled("industry", "all")
    site_blocks = [label for kind, label, _ in model.blocks if kind == "site"]
    assert site_blocks == [s.descr.site_id for s in model.sites]
    assert [k for k, _, _ in model.blocks].count("conj") == 1


def test_strict_model_matches_oracle(small_random, small_combined):
    model = compile_bundled("industry", "strict")
    oracle = Oracle(scenarios.bundled("industry", "strict"), "AccessToWorkplace", scenarios.industry_env)
    for ds in (small_random, small_combined):
        out = model.predict_proba(ds.records)
        assert set(np.unique(out)) <= {0.0, 1.0}
        assert np.array_equal(out, np.array([oracle.label(r) for r in ds.records], dtype=float))


def test_relaxed_outputs_in_open_interval(small_random):
    for relaxation in ("time-ab", "time-right", "all"):
        out = compile_bundled("industry", relaxation).predict_proba(small_random.records)
        assert np.all((out > 0) & (out < 1))


def test_init_values():
    model = compile_bundled("industry", "all", FuzzConfig(seed=3))
    rv1 = model.sites[0]
    w_a = model.params.values[rv1.offsets[""]["w_a"][0]:][:20]
    assert np.all(np.abs(w_a) <= 0.1)
    assert model.params.values[rv1.offsets[""]["w_b"][0]] == 0.0
    ab = compile_bundled("industry", "time-ab")
    assert list(ab.params.values) == [0.5, 0.5]
    assert set(ab.params.bounds.values()) == {(0.0, 1.0)}


def test_seed_controls_init():
    a = compile_bundled("industry", "all", FuzzConfig(seed=1)).params.values
    b = compile_bundled("industry", "all", FuzzConfig(seed=1)).params.values
    c = compile_bundled("industry", "all", FuzzConfig(seed=2)).params.values
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_p_must_exceed_one():
    with pytest.raises(ValueError):
        FuzzConfig(p=1.0)


def test_unknown_qualifier(small_random):
    model = fuzzify(scenarios.bundled("industry", "all"), "AccessToWorkplace", qualifier_domain=("WP1", "WP2"))
    rec = next(r for r in small_random.records if r["shift"]["workplace"]["id"] == "WP3")
    with pytest.raises(UnknownQualifier, match="WP3"):
        model.predict_proba([rec])


def test_qualified_site_needs_domain():
    src = scenarios.rules_source("industry", "all")
    schema = scenarios.INDUSTRY
    typed = load(src, schema)
    from rulefuzz.fuzzify import Compiler
    from rulefuzz.autodiff import ParamStore
    comp = Compiler(typed, "AccessToWorkplace", FuzzConfig(), scenarios.industry_env, Graph(), ParamStore())
    with pytest.raises(CompileError, match="qualifier domain"):
        comp.compile()


def test_qualifier_selects_parameter_slice(small_random):
    model = compile_bundled("industry", "all", FuzzConfig(seed=5))
    info = model.sites[1]
    wp1 = [r for r in small_random.records if r["shift"]["workplace"]["id"] == "WP1"][:5]
    before = model.predict_proba(wp1)
    off, shape = info.offsets["WP2"]["w_b"]
    model.params.values[off] += 3.0
    assert np.array_equal(model.predict_proba(wp1), before)
    off, shape = info.offsets["WP1"]["w_b"]
    model.params.values[off] += 3.0
    assert not np.array_equal(model.predict_proba(wp1), before)


def test_predicate_compiles_alone():
    model = fuzzify(scenarios.bundled("recodex", "relaxed"), "isSlow")
    out = model.predict_proba([{"job": {"refSolutionDuration": 200.0, "timeLimit": 900.0}},
                               {"job": {"refSolutionDuration": 1.0, "timeLimit": 10.0}}])
    assert out[0] > 0.5 > out[1]


def test_model_json_round_trip(small_random, tmp_path):
    model = compile_bundled("industry", "all", FuzzConfig(seed=4))
    model.params.values += np.random.default_rng(0).normal(0, 1e-3, len(model.params))
    doc = json.loads(json.dumps(model_to_json(model)))
    back = model_from_json(doc)
    assert np.array_equal(back.params.values, model.params.values)
    assert np.array_equal(back.predict_proba(small_random.records), model.predict_proba(small_random.records))
    assert [s["site_id"] for s in doc["sites"]] == ["duringShift.0", "atWorkplaceGate.0", "hasHeadGear.0"]
    assert doc["sites"][1]["qualifier_values"] == ["WP1", "WP2", "WP3"]


def test_model_import_rejects_wrong_size():
    doc = model_to_json(compile_bundled("industry", "time-right"))
    doc["values"] = doc["values"][:-1]
    with pytest.raises(ValueError, match="parameter vector"):
        model_from_json(doc)


# -- gradient checks, 100 random points per block ---------------------------------------

@pytest.mark.parametrize("block", gradblocks.BLOCKS, ids=lambda f: f.__name__.strip("_"))
def test_block_gradients(block):
    assert gradblocks.worst_error(block, points=100, seed=7) < 1e-4
