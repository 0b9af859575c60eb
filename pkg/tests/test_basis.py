import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import BSpline

from pdl.basis import (BsplineBasis, FourierBasis, bspline_eval, bspline_matrix,
                       build_test_grid, fourier_eval)

orders = st.sampled_from([2, 3, 4])
layouts = st.sampled_from(["clamped", "uniform"])


@st.composite
def bases(draw):
    lo = draw(st.floats(-50, 50))
    span = draw(st.floats(0.01, 100))
    order = draw(orders)
    m1 = draw(st.integers(max(order, 4), 60))
    return BsplineBasis(lo, lo + span, m1, order, draw(layouts))


@settings(max_examples=60)
@given(bases(), st.integers(0, 2**32 - 1))
def test_partition_of_unity(basis, seed):
    a, b = basis.interior()
    x = np.random.default_rng(seed).uniform(a, b, 1000)
    np.testing.assert_allclose(basis.evaluate(x).sum(axis=-1), 1.0, atol=1e-12)


@settings(max_examples=60)
@given(bases(), st.integers(0, 2**32 - 1))
def test_nonnegative_and_at_most_order_nonzero(basis, seed):
    rng = np.random.default_rng(seed)
    span = basis.hi - basis.lo
    x = rng.uniform(basis.lo - 0.2 * span, basis.hi + 0.2 * span, 500)
    B = basis.evaluate(x)
    assert (B >= 0).all()
    assert ((B != 0).sum(axis=-1) <= basis.order).all()


@pytest.mark.parametrize("order", [2, 3, 4])
@pytest.mark.parametrize("layout", ["clamped", "uniform"])
def test_matches_scipy_bspline(order, layout):
    basis = BsplineBasis(-1.3, 2.1, 11, order, layout)
    x = np.random.default_rng(0).uniform(-1.3, 2.1, 400)
    ours = basis.evaluate(x)
    for j in range(basis.m1):
        ref = BSpline.basis_element(basis.knots[j:j + order + 1], extrapolate=False)(x)
        np.testing.assert_allclose(ours[:, j], np.nan_to_num(ref), atol=1e-13)


@pytest.mark.parametrize("order", [3, 4])
def test_second_derivative_matches_scipy(order):
    basis = BsplineBasis(0.0, 1.0, 9, order)
    x = np.random.default_rng(1).uniform(0, 1, 300)
    ours = basis.evaluate(x, 2)
    for j in range(basis.m1):
        c = np.zeros(basis.m1)
        c[j] = 1.0
        ref = BSpline(basis.knots, c, order - 1).derivative(2)(x)
        np.testing.assert_allclose(ours[:, j], ref, atol=1e-10 * basis.spacing ** -2)


@settings(max_examples=40)
@given(bases(), st.integers(0, 2**32 - 1), st.sampled_from([1, 2]))
def test_derivatives_match_central_differences(basis, seed, deriv):
    if deriv >= basis.order:
        return
    knots = np.unique(basis.knots)
    rng = np.random.default_rng(seed)
    x = rng.uniform(basis.lo, basis.hi, 100)
    # keep points away from knots where the lower derivative is not smooth
    gap = np.min(np.abs(x[:, None] - knots[None, :]), axis=1)
    x = x[gap > 1e-3 * basis.spacing]
    h = 1e-6 * basis.spacing
    f = lambda z: basis.evaluate(z, deriv - 1)
    fd = (f(x + h) - f(x - h)) / (2 * h)
    an = basis.evaluate(x, deriv)
    scale = np.abs(an).max()
    np.testing.assert_allclose(an, fd, rtol=1e-5, atol=1e-5 * scale)


def test_derivative_one_sided_at_knots():
    basis = BsplineBasis(0.0, 1.0, 8, 3)
    knot = basis.knots[4]
    h = 1e-7
    right = (basis.evaluate(knot + h) - basis.evaluate(knot)) / h
    left = (basis.evaluate(knot) - basis.evaluate(knot - h)) / h
    np.testing.assert_allclose(basis.evaluate(knot, 1), right, atol=1e-4)
    np.testing.assert_allclose(basis.evaluate(knot, 1), left, atol=1e-4)


def test_second_derivative_at_knot_uses_right_limit():
    basis = BsplineBasis(0.0, 1.0, 8, 3)
    knot = basis.knots[5]
    np.testing.assert_array_equal(basis.evaluate(knot, 2), basis.evaluate(knot + 1e-9, 2))


def test_zero_left_of_support_and_outside_domain():
    basis = BsplineBasis(0.0, 1.0, 10, 3)
    j = 6
    left_edge = basis.knots[j]
    assert bspline_eval(basis, j, left_edge - 1e-9) == 0.0
    assert bspline_eval(basis, j, left_edge - 0.3) == 0.0
    for d in (0, 1, 2):
        assert np.all(basis.evaluate(np.array([-0.5, 1.5, -1e-12]), d) == 0.0)


def test_right_endpoint_is_inside():
    basis = BsplineBasis(0.0, 1.0, 10, 3)
    assert basis.evaluate(1.0).sum() == pytest.approx(1.0, abs=1e-15)
    assert bspline_eval(basis, 9, 1.0) == pytest.approx(1.0)


def test_uniform_layout_support_width_formula():
    b = BsplineBasis(-2.0, 2.0, 16, 3, "uniform")
    assert b.support_width == pytest.approx(4.0 * 3 / (16 + 3 - 1))
    x = np.linspace(-2, 2, 200001)
    j = 8
    nz = x[b.evaluate(x)[:, j] > 0]
    assert nz.max() - nz.min() == pytest.approx(b.support_width, abs=1e-4)


def test_quadwell_nominal_width_is_quarter():
    # reported width for 16 quadratic splines on [-2, 2]
    b = BsplineBasis(-2.0, 2.0, 16, 3)
    assert b.nominal_width == pytest.approx(0.25)


def test_resolution_floor():
    with pytest.raises(ValueError, match="resolution"):
        BsplineBasis(0.0, 1.0, 2 * 10**9, 3, "uniform")


def test_deriv_beyond_degree_is_zero():
    b = BsplineBasis(0.0, 1.0, 6, 2)
    assert np.all(b.evaluate(np.linspace(0, 1, 7), 2) == 0)
    assert bspline_matrix(b.knots, 2, 0.3, 5).shape == (6,)


def test_bspline_eval_index_check():
    with pytest.raises(IndexError):
        bspline_eval(BsplineBasis(0, 1, 5), 5, 0.5)


# ---------------------------------------------------------------- Fourier

def test_constant_mode():
    f = FourierBasis(3.0, 5)
    t = np.linspace(0, 3, 17)
    assert np.all(fourier_eval(f, 0, t) == 1.0)
    assert np.all(fourier_eval(f, 0, t, 1) == 0.0)


def test_cosine_derivative_vanishes_at_zero():
    f = FourierBasis(2.0, 3)
    assert fourier_eval(f, 1, 0.0, 1) == 0.0


def test_discrete_orthogonality():
    T = 5.0
    f = FourierBasis(T, 5)
    t = np.linspace(0, T, 200001)
    g = fourier_eval(f, 1, t) * fourier_eval(f, 3, t)
    assert abs(2 / T * np.trapezoid(g, t)) < 1e-6


def test_mode_enumeration():
    f = FourierBasis(1.0, 31)
    labels = f.labels()
    assert labels[0] == "1"
    assert sum(lab.startswith("cos") for lab in labels) == 15
    assert sum(lab.startswith("sin") for lab in labels) == 15
    even = FourierBasis(1.0, 4).labels()
    assert even == ["1", "cos1", "sin1", "cos2"]


@settings(max_examples=50)
@given(st.floats(0.1, 100), st.integers(1, 40), st.floats(-10, 10))
def test_modes_bounded_and_derivatives_analytic(period, m2, t0):
    f = FourierBasis(period, m2, t0)
    t = t0 + np.linspace(0, period, 97)
    v = f.evaluate(t)
    assert np.all(np.abs(v) <= 1 + 1e-12)
    h = 1e-6 * period
    fd = (f.evaluate(t + h) - f.evaluate(t - h)) / (2 * h)
    np.testing.assert_allclose(f.evaluate(t, 1), fd, atol=1e-5 * max(1.0, f.frequencies().max()))


# ---------------------------------------------------------------- grid

def test_grid_size_and_index_bijection():
    g = build_test_grid([(0, 1)], 4, 1, [0.0, 1.0])
    assert g.size == 4
    g = build_test_grid([(0, 1), (-1, 1)], 7, 5, np.linspace(2, 4, 9))
    seen = {g.flat_index(a, b) for a in range(7) for b in range(5)}
    assert seen == set(range(35))
    assert all(g.flat_index(*g.split_index(m)) == m for m in range(35))
    assert g.fourier.period == pytest.approx(2.0) and g.fourier.t0 == 2.0


def test_grid_rejects_small_m1():
    with pytest.raises(ValueError):
        build_test_grid([(0, 1)], 3, 1, [0, 1])
