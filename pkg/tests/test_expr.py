import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fracmech import expr as ex
from fracmech.expr import (
    Add,
    Call,
    Const,
    Div,
    EvaluationError,
    ExprSyntaxError,
    Mul,
    Neg,
    Pow,
    Sub,
    UndeclaredVariableError,
    Var,
)

NAMES = ("x", "y", "q1_0")

leaves = st.one_of(
    st.sampled_from([Var(n) for n in NAMES]),
    st.floats(-5, 5, allow_nan=False).map(lambda v: Const(round(v, 3))),
)


def _extend(children):
    binary = st.sampled_from([Add, Sub, Mul, Div])
    return st.one_of(
        st.builds(lambda op, a, b: op(a, b), binary, children, children),
        children.filter(lambda e: not isinstance(e, Const)).map(Neg),
        st.builds(Pow, children, st.sampled_from([2.0, 3.0, -1.0, 0.5])),
        st.builds(Call, st.sampled_from(["sin", "cos", "exp"]), children),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)
polys = st.recursive(
    leaves,
    lambda c: st.one_of(
        st.builds(lambda op, a, b: op(a, b), st.sampled_from([Add, Sub, Mul]), c, c),
        st.builds(Pow, c, st.sampled_from([2.0, 3.0])),
        st.builds(Call, st.sampled_from(["sin", "cos"]), c),
    ),
    max_leaves=8,
)


# -- parsing and printing ---------------------------------------------------------------


@given(trees)
def test_print_parse_round_trip(e):
    assert ex.parse(ex.to_text(e)) == e


@pytest.mark.parametrize(
    "text, value",
    [
        ("3+4*2", 11.0),
        ("2^3^2", 512.0),
        ("-2^2", -4.0),
        ("(1+2)*(3-1)/4", 1.5),
        ("1e-3*2E2", 0.2),
        ("exp(0) + ln(1) + sin(0) + cos(0)", 2.0),
        ("x - -x", 6.0),
        ("8 - 3 - 2", 3.0),
        ("16 / 4 / 2", 2.0),
    ],
)
def test_evaluate_known_values(text, value):
    assert ex.evaluate(ex.parse(text), {"x": 3.0}) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize(
    "text, offset",
    [("q1*", 3), ("(1+2", 4), ("1 + $", 4), ("sin 1", 4), ("x^y", 2), ("1 2", 2), ("   ", 0)],
)
def test_syntax_errors_report_offsets(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        ex.parse(text)
    assert info.value.position == offset
    assert f"offset {offset}" in str(info.value)


def test_undeclared_variable_is_rejected_with_position():
    with pytest.raises(UndeclaredVariableError) as info:
        ex.parse("t + 2*z", {"t"})
    assert info.value.name == "z" and info.value.position == 6
    assert ex.free_vars(ex.parse("t*t + sin(t)", {"t"})) == {"t"}


def test_printing_uses_minimal_parentheses():
    assert ex.to_text(ex.parse("(a*b)+c")) == "a * b + c"
    assert ex.to_text(ex.parse("a-(b-c)")) == "a - (b - c)"
    assert ex.to_text(ex.parse("(a^b)^2".replace("b", "3"))) == "(a^3)^2"
    assert ex.to_text(ex.parse("-(a+b)")) == "-(a + b)"
    assert ex.to_text(ex.parse("x^-0.5")) == "x^(-0.5)"
    assert ex.to_text(Const(-2.0)) == "(-2)"


# -- constructors -------------------------------------------------------------------------


def test_simplifying_constructors():
    x = Var("x")
    assert ex.add(x, ex.ZERO) is x
    assert ex.mul(x, ex.ZERO) == ex.ZERO
    assert ex.mul(ex.ONE, x) is x
    assert ex.mul(x, Const(2.0)) == Mul(Const(2.0), x)
    assert ex.mul(Const(3.0), ex.mul(Const(2.0), x)) == Mul(Const(6.0), x)
    assert ex.mul(Const(-1.0), x) == Neg(x)
    assert ex.power(x, 1.0) is x and ex.power(x, 0.0) == ex.ONE
    assert ex.neg(ex.neg(x)) is x
    assert ex.sub(ex.ZERO, x) == Neg(x)
    assert ex.div(ex.ZERO, x) == ex.ZERO
    assert ex.call("cos", ex.ZERO) == ex.ONE
    assert ex.total([]) == ex.ZERO
    with pytest.raises(ValueError):
        ex.call("tan", x)


def test_substitute_and_rename():
    e = ex.parse("x*y + y")
    assert ex.to_text(ex.substitute(e, {"y": ex.parse("2")})) == "2 * x + 2"
    assert ex.to_text(ex.rename(e, {"x": "q1_0"})) == "q1_0 * y + y"
    assert ex.substitute(e, {"x": ex.ZERO}) == Var("y")


# -- evaluation ----------------------------------------------------------------------------


def test_evaluate_broadcasts_arrays():
    e = ex.parse("x*y + 1")
    out = ex.evaluate(e, {"x": np.arange(3.0), "y": 2.0})
    np.testing.assert_array_equal(out, [1.0, 3.0, 5.0])


@pytest.mark.parametrize("text, binding", [("1/x", {"x": 0.0}), ("ln(x)", {"x": -1.0}), ("x^0.5", {"x": -4.0}), ("exp(x)", {"x": 1e4})])
def test_evaluation_errors(text, binding):
    with pytest.raises(EvaluationError):
        ex.evaluate(ex.parse(text), binding)


def test_evaluation_error_on_any_array_element():
    with pytest.raises(EvaluationError):
        ex.evaluate(ex.parse("1/x"), {"x": np.array([1.0, 0.0])})


def test_unbound_variable():
    with pytest.raises(EvaluationError, match="'w'"):
        ex.evaluate(ex.parse("x + w"), {"x": 1.0})


# -- differentiation ----------------------------------------------------------------------


def test_diff_known_results():
    assert ex.to_text(ex.diff(ex.parse("q1^2"), "q1")) == "2 * q1"
    assert ex.diff(ex.parse("y^3"), "x") == ex.ZERO
    assert ex.to_text(ex.diff(ex.parse("sin(x)"), "x")) == "cos(x)"
    assert ex.evaluate(ex.diff(ex.parse("ln(x)"), "x"), {"x": 4.0}) == 0.25


@given(polys, st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_diff_matches_central_difference(e, x, y):
    binding = {"x": x, "y": y, "q1_0": 0.3}
    d = ex.diff(e, "x")
    h = 1e-5
    try:
        f0 = ex.evaluate(e, binding)
        fp = ex.evaluate(e, {**binding, "x": x + h})
        fm = ex.evaluate(e, {**binding, "x": x - h})
        exact = ex.evaluate(d, binding)
    except EvaluationError:
        assume(False)
    assume(max(abs(f0), abs(fp), abs(fm)) < 1e6)
    fd = (fp - fm) / (2 * h)
    assert exact == pytest.approx(fd, rel=1e-4, abs=1e-4 * (1 + abs(f0)))


@given(polys)
def test_diff_of_absent_variable_is_zero(e):
    assert ex.diff(e, "absent") == ex.ZERO


@given(trees)
def test_simplify_preserves_value(e):
    binding = {"x": 0.7, "y": -0.4, "q1_0": 1.3}
    try:
        before = ex.evaluate(e, binding)
    except EvaluationError:
        assume(False)
    assume(math.isfinite(before) and abs(before) < 1e8)
    assert ex.evaluate(ex.simplify(e), binding) == pytest.approx(before, rel=1e-10, abs=1e-10)
