import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from fracmech.errors import AccuracyError, DomainError, UsageError
from fracmech.frac_ops import (
    FracOrders,
    Grid,
    SampledFunction,
    Side,
    apply,
    build_operator,
    gl_weights,
    power_rule_oracle,
    quadrature_oracle,
    sequential_apply,
)

orders = st.floats(min_value=0.05, max_value=1.95, allow_nan=False)


# -- grid and data types ----------------------------------------------------------


def test_grid_step_and_nodes():
    g = Grid(0.0, 2.0, 5)
    assert g.h == 0.5
    np.testing.assert_array_equal(g.nodes, [0.0, 0.5, 1.0, 1.5, 2.0])
    assert g.refine() == Grid(0.0, 2.0, 9)


@pytest.mark.parametrize("a, b, n", [(1.0, 1.0, 5), (2.0, 1.0, 5), (0.0, 1.0, 1), (0, math.inf, 3)])
def test_grid_rejects_bad_input(a, b, n):
    with pytest.raises(DomainError):
        Grid(a, b, n)


def test_orders_default_beta_and_validation():
    o = FracOrders(0.3)
    assert o.beta == 0.3 and o.in_main_range
    assert not FracOrders(0.5, 1.5).in_main_range
    with pytest.raises(DomainError):
        FracOrders(0.0)
    with pytest.raises(DomainError):
        FracOrders(0.5, -1.0)


def test_sampled_function_is_read_only_and_checked():
    g = Grid(0, 1, 4)
    f = SampledFunction(g, [1, 2, 3, 4])
    with pytest.raises(ValueError):
        f.values[0] = 5.0
    with pytest.raises(UsageError):
        SampledFunction(g, [1, 2, 3])
    with pytest.raises(DomainError):
        SampledFunction(g, [1, 2, np.nan, 4])


def test_side_parse():
    assert Side.parse("LEFT") is Side.LEFT
    with pytest.raises(DomainError):
        Side.parse("up")


# -- weights and matrices ----------------------------------------------------------------


def test_weights_match_signed_binomials():
    # independent oracle: (-1)^k binom(alpha, k) via scipy
    for alpha in (0.25, 0.5, 1.3):
        k = np.arange(12)
        expected = (-1.0) ** k * special.binom(alpha, k)
        np.testing.assert_allclose(gl_weights(alpha, 12), expected, rtol=1e-13, atol=1e-16)
    np.testing.assert_array_equal(gl_weights(0.5, 5), [1.0, -0.5, -0.125, -0.0625, -0.0390625])


def test_integer_order_weights_are_exact():
    w = gl_weights(1.0, 8)
    assert w.tolist() == [1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
    assert gl_weights(2.0, 5).tolist() == [1.0, -2.0, 1.0, 0.0, 0.0]


def test_weights_reject_bad_arguments():
    with pytest.raises(DomainError):
        gl_weights(-0.5, 3)
    with pytest.raises(DomainError):
        gl_weights(0.5, 0)


def test_gl_weights_returns_a_private_copy():
    w = gl_weights(0.5, 4)
    w[0] = 7.0
    assert gl_weights(0.5, 4)[0] == 1.0


@given(alpha=orders, n=st.integers(min_value=2, max_value=60))
def test_right_matrix_is_exact_transpose(alpha, n):
    g = Grid(0.0, 1.0, n)
    left = build_operator(Side.LEFT, alpha, g)
    right = build_operator(Side.RIGHT, alpha, g)
    assert np.array_equal(right.entries, left.entries.T)
    assert np.all(np.triu(left.entries, 1) == 0.0)


def test_operators_are_cached_and_immutable():
    g = Grid(0.0, 1.0, 17)
    a = build_operator("left", 0.5, g)
    assert build_operator(Side.LEFT, 0.5, Grid(0.0, 1.0, 17)) is a
    with pytest.raises(ValueError):
        a.entries[0, 0] = 1.0
    assert a.boundary_node == 0
    assert build_operator("right", 0.5, g).boundary_node == 16


def test_operator_rejects_mismatched_samples():
    op = build_operator(Side.LEFT, 0.5, Grid(0, 1, 5))
    with pytest.raises(UsageError):
        op.matvec(np.ones(6))
    with pytest.raises(UsageError):
        apply(op, SampledFunction(Grid(0, 1, 6), np.ones(6)))
    with pytest.raises(UsageError):
        build_operator(Side.LEFT, 0.5, "grid")


def test_matvec_accepts_batches():
    g = Grid(0, 1, 9)
    op = build_operator(Side.RIGHT, 0.7, g)
    X = np.random.default_rng(1).normal(size=(9, 3))
    np.testing.assert_allclose(op @ X, np.column_stack([op @ X[:, j] for j in range(3)]))


@given(
    alpha=orders,
    c=st.floats(-5, 5, allow_nan=False),
    seed=st.integers(0, 2**32 - 1),
)
def test_apply_is_linear(alpha, c, seed):
    g = Grid(0.0, 1.0, 33)
    rng = np.random.default_rng(seed)
    f, h = rng.normal(size=33), rng.normal(size=33)
    op = build_operator(Side.LEFT, alpha, g)
    lhs = apply(op, SampledFunction(g, c * f + h)).values
    rhs = c * apply(op, SampledFunction(g, f)).values + apply(op, SampledFunction(g, h)).values
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


@given(alpha=orders, seed=st.integers(0, 2**32 - 1))
def test_right_operator_is_mirrored_left_operator(alpha, seed):
    # reflecting t -> a + b - t swaps the two sides
    g = Grid(0.0, 1.0, 25)
    f = np.random.default_rng(seed).normal(size=25)
    left = build_operator(Side.LEFT, alpha, g)
    right = build_operator(Side.RIGHT, alpha, g)
    np.testing.assert_allclose((right @ f)[::-1], left @ f[::-1], rtol=1e-13, atol=1e-10)


def test_alpha_one_is_backward_difference():
    g = Grid(0.0, 1.0, 11)
    t = g.nodes
    f = np.sin(t)
    left = build_operator(Side.LEFT, 1.0, g) @ f
    right = build_operator(Side.RIGHT, 1.0, g) @ f
    np.testing.assert_allclose(left[1:], np.diff(f) / g.h, rtol=1e-12)
    np.testing.assert_allclose(right[:-1], -np.diff(f) / g.h, rtol=1e-12)


def test_sequential_apply_is_literal_composition():
    g = Grid(0.0, 1.0, 9)
    op = build_operator(Side.LEFT, 0.5, g)
    f = SampledFunction.from_callable(g, np.cos)
    twice = sequential_apply(op, f, 2).values
    np.testing.assert_allclose(twice, op.entries @ (op.entries @ f.values))
    assert sequential_apply(op, f, 0) is f
    with pytest.raises(UsageError):
        sequential_apply(op, f, -1)
    with pytest.raises(UsageError):
        sequential_apply(op, f, 1.5)


# -- oracles ----------------------------------------------------------------------------


def test_power_rule_closed_forms():
    # d^1/2 t = 2 sqrt(t/pi)
    assert power_rule_oracle(1.0, 0.5, 0.0, 1.0) == pytest.approx(2.0 / math.sqrt(math.pi), rel=1e-15)
    # derivative of a constant: t^-alpha / Gamma(1 - alpha)
    t = np.array([0.25, 1.0])
    np.testing.assert_allclose(
        power_rule_oracle(0.0, 0.3, 0.0, t), t**-0.3 / math.gamma(0.7), rtol=1e-14
    )
    # integer order on a lower power vanishes exactly
    assert power_rule_oracle(0.0, 1.0, 0.0, 0.5) == 0.0
    assert power_rule_oracle(2.0, 1.0, 0.0, 0.5) == pytest.approx(1.0)


def test_power_rule_domain():
    with pytest.raises(DomainError):
        power_rule_oracle(-1.0, 0.5, 0.0, 1.0)
    with pytest.raises(DomainError):
        power_rule_oracle(1.0, 0.5, 0.0, 0.0)


def test_quadrature_oracle_matches_power_rule():
    for alpha in (0.3, 0.5, 0.7):
        for nu in (1.0, 2.0):
            ref = power_rule_oracle(nu, alpha, 0.0, 0.6)
            got = quadrature_oracle(Side.LEFT, alpha, lambda s: s**nu, 0.0, 2.0, 0.6)
            assert got == pytest.approx(ref, rel=1e-7)


def test_quadrature_oracle_right_side_by_reflection():
    # right derivative of (b - t)^2 equals the left derivative of t^2 mirrored
    got = quadrature_oracle(Side.RIGHT, 0.5, lambda s: (1.0 - s) ** 2, 0.0, 1.0, 0.25)
    assert got == pytest.approx(power_rule_oracle(2.0, 0.5, 0.0, 0.75), rel=1e-7)
    assert quadrature_oracle(Side.LEFT, 0.5, lambda s: 0.0 * s, 0.0, 1.0, 0.5) == 0.0


def test_quadrature_oracle_reports_failure():
    with pytest.raises(AccuracyError) as info:
        quadrature_oracle(Side.LEFT, 0.5, lambda s: np.sin(1e4 * s), 0.0, 1.0, 0.5, tol=1e-14, max_levels=2)
    assert math.isfinite(info.value.estimate) and info.value.error_bound > 0


def test_quadrature_oracle_domain():
    with pytest.raises(DomainError):
        quadrature_oracle(Side.LEFT, 1.0, np.sin, 0.0, 1.0, 0.5)
    with pytest.raises(DomainError):
        quadrature_oracle(Side.LEFT, 0.5, np.sin, 0.0, 1.0, 1.0)


def test_gl_first_order_convergence_on_smooth_function():
    errs = []
    for n in (129, 257, 513):
        g = Grid(0.0, 1.0, n)
        approx = build_operator(Side.LEFT, 0.5, g) @ (g.nodes**2)
        exact = power_rule_oracle(2.0, 0.5, 0.0, g.nodes[1:])
        errs.append(np.max(np.abs(approx[1:] - exact)))
    assert 1.7 < errs[0] / errs[1] < 2.3
    assert 1.7 < errs[1] / errs[2] < 2.3
