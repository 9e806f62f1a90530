import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qiecert.expr import (
    FUNCTIONS, BinOp, Call, ExpressionDomainError, Neg, Num, ParseError, Var,
    evaluate, evaluate_on, parse, to_source, variables,
)


def test_parse_tree_shape():
    assert parse("t*exp(-s)", ("t", "s")) == BinOp("*", Var("t"), Call("exp", (Neg(Var("s")),)))


@pytest.mark.parametrize("src,value", [
    ("2+3*4", 14.0),
    ("(2+3)*4", 20.0),
    ("2^3^2", 512.0),     # right-associative
    ("-2^2", 4.0),        # unary minus binds to the base
    ("8/4/2", 1.0),
    ("1.5e2 + .5", 150.5),
    ("max(2, 3) - min(2, 3)", 1.0),
])
def test_precedence(src, value):
    assert evaluate(parse(src), {}) == value


@pytest.mark.parametrize("src,bind,value", [
    ("1/(1+x^2)", {"x": 1.0}, 0.5),
    ("max(t,s)", {"t": 2.0, "s": 3.0}, 3.0),
    ("abs(x) + sqrt(4) + atan(0) + tanh(0) + cos(0) + sin(0)", {"x": -1.0}, 4.0),
])
def test_evaluate_examples(src, bind, value):
    assert evaluate(parse(src, bind), bind) == value


def test_unbalanced_paren_is_located():
    with pytest.raises(ParseError) as ei:
        parse("x/(1+y", ("x", "y"))
    err = ei.value
    # end of input sits at offset len(source) = 6
    assert err.offset == 6 and err.expected == "')'"
    assert "column 7" in str(err)


@pytest.mark.parametrize("src,offset,fragment", [
    ("", 0, "an expression"),
    ("foo(x)", 0, "known function"),
    ("max(x)", 0, "2 argument(s) to max"),
    ("sin(x, x)", 0, "1 argument(s) to sin"),
    ("z + 1", 0, "variable"),
    ("2**3", 2, "'*'"),
    ("x y", 2, "operator"),
    ("(x))", 3, "')'"),
])
def test_parse_errors(src, offset, fragment):
    with pytest.raises(ParseError) as ei:
        parse(src, ("x",))
    assert ei.value.offset == offset
    assert 0 <= ei.value.offset <= len(src.encode())
    assert fragment in str(ei.value)


def test_offset_counts_bytes():
    # "é" is two bytes in UTF-8
    with pytest.raises(ParseError) as ei:
        parse("x + é", ("x",))
    assert ei.value.offset == 4


def test_domain_error_names_subexpression():
    with pytest.raises(ExpressionDomainError) as ei:
        evaluate(parse("1 + ln(x)", ("x",)), {"x": 0.0})
    assert "ln(x)" in ei.value.subexpression and ei.value.bindings == {"x": 0.0}


def test_domain_error_locates_array_entry():
    x = np.array([1.0, 2.0, -1.0, 3.0])
    with pytest.raises(ExpressionDomainError) as ei:
        evaluate(parse("sqrt(x)", ("x",)), {"x": x})
    assert ei.value.bindings == {"x": -1.0}


def test_evaluate_broadcasts_and_returns_float_for_scalars():
    node = parse("t - s", ("t", "s"))
    assert isinstance(evaluate(node, {"t": 1.0, "s": 0.5}), float)
    out = evaluate_on(node, (3, 2), {"t": np.arange(3.0)[:, None], "s": np.arange(2.0)[None, :]})
    assert out.shape == (3, 2) and out[2, 1] == 1.0
    assert evaluate_on(parse("2"), (4,), {}).tolist() == [2.0] * 4


def test_unbound_variable():
    with pytest.raises(KeyError):
        evaluate(parse("x", ("x",)), {})


def test_variables():
    assert variables(parse("t*x + exp(s)", ("t", "x", "s"))) == {"t", "x", "s"}


# -- round trip -------------------------------------------------------------------------

VARS = ("t", "x")


def _trees():
    leaves = st.one_of(
        st.floats(-1e6, 1e6, allow_nan=False).map(Num),
        st.sampled_from(VARS).map(Var),
    )

    def extend(children):
        unary = [n for n, (a, _) in FUNCTIONS.items() if a == 1]
        return st.one_of(
            children.map(Neg),
            st.builds(BinOp, st.sampled_from("+-*/^"), children, children),
            st.builds(lambda n, a: Call(n, (a,)), st.sampled_from(unary), children),
            st.builds(lambda n, a, b: Call(n, (a, b)), st.sampled_from(["min", "max"]), children, children),
        )

    return st.recursive(leaves, extend, max_leaves=12)


def _eval_or_error(node, bind):
    try:
        return evaluate(node, bind)
    except ExpressionDomainError as err:
        return ("error", err.subexpression)


@given(_trees(), st.floats(-10, 10), st.floats(-10, 10))
def test_round_trip_bit_equal(tree, t, x):
    again = parse(to_source(tree), VARS)
    assert again == tree or to_source(again) == to_source(tree)
    a = _eval_or_error(tree, {"t": t, "x": x})
    b = _eval_or_error(again, {"t": t, "x": x})
    if isinstance(a, float):
        assert isinstance(b, float) and (a == b or (math.isnan(a) and math.isnan(b)))
        assert np.float64(a).tobytes() == np.float64(b).tobytes()
    else:
        assert isinstance(b, tuple)


@given(st.lists(st.sampled_from(["+", "-", "*", "/", "^"]), min_size=1, max_size=8))
def test_flat_expressions_parse_uniquely(ops):
    src = "2"
    for k, op in enumerate(ops):
        src += f" {op} {k % 3 + 1}"
    tree = parse(src)
    assert parse(to_source(tree)) == tree
