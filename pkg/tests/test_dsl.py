import pytest
from hypothesis import given, settings, strategies as st

from rulefuzz import scenarios
from rulefuzz.dsl import RuleSyntaxError, RuleTypeError, format_file, list_trainables, load, parse, parse_expr
from rulefuzz.dsl import ast as A
from rulefuzz.dsl.printer import expr_str

LISTINGS = [("industry", "strict"), ("industry", "time-ab"), ("industry", "time-right"),
            ("industry", "all"), ("recodex", "strict"), ("recodex", "relaxed")]


def test_empty_file():
    rf = parse("")
    assert rf.rules == () and rf.preds == ()


def test_comment_only_file():
    assert parse("// nothing here\n").preds == ()


def test_during_shift_shape():
    rf = parse(scenarios.rules_source("industry", "strict"))
    body = rf.pred("duringShift").body
    assert isinstance(body, A.Binary) and body.op == "&&"
    assert body.left.op == "<" and body.right.op == ">"
    assert expr_str(body.left.left) == "(shift.startTime - 1200)"


def test_syntax_error_position():
    with pytest.raises(RuleSyntaxError) as info:
        parse("pred p() { 1 < }")
    err = info.value
    assert (err.span.line, err.span.col) == (1, 16)
    assert "IDENT" in err.expected and "NUMBER" in err.expected
    assert "1:16" in str(err)


def test_syntax_error_on_later_line():
    with pytest.raises(RuleSyntaxError) as info:
        parse("pred p(x) {\n  x.a < 3 &&\n}\n")
    assert info.value.span.line == 3


@pytest.mark.parametrize("scenario,relaxation", LISTINGS)
def test_bundled_listings_typecheck(scenario, relaxation):
    typed = scenarios.bundled(scenario, relaxation)
    assert typed.file.rules or typed.file.preds


@pytest.mark.parametrize("scenario,relaxation", LISTINGS)
def test_pretty_print_round_trip(scenario, relaxation):
    rf = parse(scenarios.rules_source(scenario, relaxation))
    assert parse(format_file(rf)) == rf


def test_listing4_thresholds():
    sites = list_trainables(scenarios.bundled("industry", "time-ab"))
    assert [s.kind for s in sites] == ["AboveThreshold", "BelowThreshold"]
    assert (sites[0].min, sites[0].max) == (0, 36000)
    assert (sites[1].min, sites[1].max) == (-36000, 0)


def test_listing5_sites():
    sites = list_trainables(scenarios.bundled("industry", "all"))
    assert [s.kind for s in sites] == ["RightValue1D", "RightValue2D", "RightCategories"]
    assert sites[0].capacity == 20 and sites[1].capacity == 20
    assert sites[1].qualifier_key == "worker.workplace.id"
    assert sites[1].qualifier_domain == "resolved at dataset-bind time"
    assert sites[1].min == (0, 0) and sites[1].max == (316.43506, 177.88289)
    assert (sites[2].categories, sites[2].capacity, sites[2].take) == (2, 1, 1)
    assert sites[2].category_values == ("TAKE_HGEAR", "RET_HGEAR")
    assert len({s.site_id for s in sites}) == 3


def test_strict_listing_has_no_trainables():
    assert list_trainables(scenarios.bundled("industry", "strict")) == []


def test_min_below_max_everywhere():
    for scenario, relaxation in LISTINGS:
        for d in list_trainables(scenarios.bundled(scenario, relaxation)):
            if d.min is None:
                continue
            lo = d.min if isinstance(d.min, tuple) else (d.min,)
            hi = d.max if isinstance(d.max, tuple) else (d.max,)
            assert all(a < b for a, b in zip(lo, hi))


STRICT_PREDS = scenarios.rules_source("industry", "strict").split("pred duringShift")[1]
STRICT_PREDS = "pred duringShift" + STRICT_PREDS


def _check(src):
    return load(src, scenarios.INDUSTRY)


def test_bool_expected():
    src = STRICT_PREDS + "\npred bad(shift) { duringShift(shift) && 5 }\n"
    with pytest.raises(RuleTypeError, match="Bool expected"):
        _check(src)


def test_unresolved_path():
    with pytest.raises(RuleTypeError, match="unresolved"):
        _check("pred p(worker) { worker.height > 3 }")


def test_recursion_rejected():
    with pytest.raises(RuleTypeError, match="recursive"):
        _check("pred a(worker) { b(worker) }\npred b(worker) { a(worker) }")


def test_duplicate_pred_rejected():
    with pytest.raises(RuleTypeError, match="duplicate"):
        _check("pred a(worker) { worker.posX > 1 }\npred a(worker) { worker.posX > 2 }")


def test_qualifier_on_plain_call_rejected():
    src = STRICT_PREDS + "\npred q(shift) { duringShift@[shift.workplace.id](shift) }\n"
    with pytest.raises(RuleTypeError, match="qualifier"):
        _check(src)


def test_arity_mismatch():
    src = STRICT_PREDS + "\npred q(shift) { duringShift(shift, shift) }\n"
    with pytest.raises(RuleTypeError):
        _check(src)


def test_comparison_needs_numbers():
    with pytest.raises(RuleTypeError):
        _check("pred p(worker) { worker.events < 3 }")


def test_typecheck_deterministic():
    src = scenarios.rules_source("industry", "all")
    a, b = load(src, scenarios.INDUSTRY), load(src, scenarios.INDUSTRY)
    assert list_trainables(a) == list_trainables(b)


def test_precedence():
    e = parse_expr("1 + 2 * 3 ^ 2 < 4 || !x.a > 1 && y.b == 2")
    assert expr_str(e) == "(((1 + (2 * (3 ^ 2))) < 4) || ((!(x.a > 1)) && (y.b == 2)))"
    assert parse_expr("2 ^ 3 ^ 2").right.op == "^"
    assert isinstance(parse_expr("-x.a * 2").left, A.Neg)


# -- property: printing then reparsing yields the same AST ---------------------------------

names = st.sampled_from(["a", "b", "shift", "worker"])
leaf = st.one_of(
    st.integers(0, 10_000).map(str),
    st.floats(0, 1e6, allow_nan=False).map(lambda v: repr(float(v))),
    st.lists(names, min_size=1, max_size=3).map(".".join),
    st.just("NOW"),
)


def combine(children):
    bin_ops = ["+", "-", "*", "/", "<", ">", "<=", ">=", "==", "&&", "||"]
    return st.one_of(
        st.tuples(children, st.sampled_from(bin_ops), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        children.map(lambda c: f"(!({c}))"),
        children.map(lambda c: f"-({c})"),
        children.map(lambda c: f"sqrt({c})"),
    )


exprs = st.recursive(leaf, combine, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(exprs)
def test_expression_round_trip(src):
    e = parse_expr(src)
    assert parse_expr(expr_str(e)) == e
