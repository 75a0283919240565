import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netmono.profiles import BlendedProfile, PiecewiseConstant, TimeProfile, evaluate_profile


def test_interpolation_and_slope():
    p = TimeProfile.from_pairs([(0, 1), (10, 2)])
    assert evaluate_profile(p, 5) == pytest.approx((1.5, 0.1))


def test_hold_beyond_last_breakpoint():
    p = TimeProfile.from_pairs([(0, 1), (10, 2)])
    assert evaluate_profile(p, 20) == (2.0, 0.0)
    assert evaluate_profile(p, -3) == (1.0, 0.0)


def test_constant_profile():
    p = TimeProfile.from_pairs([(0, 3)])
    for t in (-1.0, 0.0, 7.5):
        assert evaluate_profile(p, t) == (3.0, 0.0)


def test_derivative_right_continuous():
    p = TimeProfile((0.0, 1.0, 2.0), (0.0, 2.0, 1.0))
    assert p.derivative(1.0) == -1.0
    assert p.derivative(0.999) == 2.0
    assert p.derivative(2.0) == 0.0


@pytest.mark.parametrize("times", [(1.0, 1.0), (2.0, 1.0)])
def test_rejects_non_increasing_times(times):
    with pytest.raises(ValueError):
        TimeProfile(times, (1.0, 2.0))


def test_rejects_empty_and_mismatched():
    with pytest.raises(ValueError):
        TimeProfile((), ())
    with pytest.raises(ValueError):
        TimeProfile((0.0, 1.0), (1.0,))


def test_vector_matches_scalar():
    p = TimeProfile((0.0, 0.3, 2.0), (1.0, -1.0, 4.0))
    ts = np.linspace(-1, 3, 41)
    np.testing.assert_allclose(p(ts), [p(float(t)) for t in ts], rtol=0, atol=1e-15)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6), st.floats(-1, 7))
def test_value_within_breakpoint_hull(values, t):
    times = tuple(float(i) for i in range(len(values)))
    p = TimeProfile(times, tuple(values))
    assert min(values) - 1e-12 <= p(t) <= max(values) + 1e-12


@given(st.floats(0.0, 0.98), st.floats(1e-4, 1e-2))
def test_derivative_matches_difference_quotient(t, h):
    p = TimeProfile((0.0, 1.0), (2.0, -1.0))
    assert (p(t + h) - p(t)) / h == pytest.approx(p.derivative(t), abs=1e-9)


def test_piecewise_constant_is_right_continuous():
    p = PiecewiseConstant(2.0, (1.0, 3.0))
    assert p(0.0) == 1.0 and p(0.999) == 1.0 and p(1.0) == 3.0 and p(5.0) == 3.0
    assert p.evaluate(0.5) == (1.0, 0.0)
    np.testing.assert_array_equal(p(np.array([0.5, 1.5])), [1.0, 3.0])


def test_blend_between_envelopes():
    lo, hi = TimeProfile.constant(-1.0), TimeProfile.constant(3.0)
    b = BlendedProfile(lo, hi, TimeProfile((0.0, 1.0), (0.0, 1.0)))
    assert b(0.0) == -1.0 and b(1.0) == 3.0 and b(0.25) == pytest.approx(0.0)
