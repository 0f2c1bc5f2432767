import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import integrate, stats

from powerlaw_portfolio.errors import InsufficientDataError, ValidationError
from powerlaw_portfolio.moments import (
    MomentProfile,
    estimate_moments,
    gaussian_abs_moment,
    gaussian_abs_moment_stirling,
    gaussian_log_abs_moment,
    gaussian_log_abs_moment_stirling,
    kurtosis,
    log_abs_moment,
    moment_profile,
)

# E|Z|^p for a standard normal, from scipy quad (epsrel 1e-13), frozen
QUAD_UNIT_MOMENTS = {
    2: 1.0000000000000002,
    2.5: 1.2332684379936882,
    3: 1.5957691216057308,
    4: 3.0,
    5: 6.383076486422924,
    6: 15.000000000000002,
    10: 945.0000000000002,
}

samples = hnp.arrays(
    np.float64,
    st.integers(2, 40),
    elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False),
)


def test_two_point_p2():
    est = estimate_moments([-1.0, 1.0], 2)
    assert est == (0.0, 1.0, 1.0)


def test_two_point_p3():
    est = estimate_moments([-1.0, 1.0], 3)
    assert est.absolute == 1.0 and est.signed == 0.0


def test_non_integer_order_has_no_signed_moment():
    assert estimate_moments([0.0, 1.0, 3.0], 2.5).signed is None


@pytest.mark.parametrize("series", [[], [1.0]])
def test_too_short(series):
    with pytest.raises(InsufficientDataError):
        estimate_moments(series, 2)


@pytest.mark.parametrize("p", [0.5, math.inf])
def test_bad_order(p):
    with pytest.raises(ValidationError):
        estimate_moments([0.0, 1.0], p)


def test_monte_carlo_fourth_moment():
    x = np.random.default_rng(7).standard_normal(1_000_000)
    est = estimate_moments(x, 4)
    # sd of |z|^4 is sqrt(105 - 9)
    se = math.sqrt(96.0 / x.size)
    assert abs(est.absolute - 3.0) < 3 * se


@settings(max_examples=60, deadline=None)
@given(samples, st.floats(-50, 50), st.sampled_from([1, 2, 2.5, 3, 4, 7]))
def test_scaling(x, c, p):
    # relative accuracy of centered residuals needs a spread that is not lost to rounding
    assume(np.ptp(x) > 1e-3 * np.max(np.abs(x)) or np.ptp(x) == 0)
    base = estimate_moments(x, p).absolute
    scaled = estimate_moments(c * x, p).absolute
    assert scaled == pytest.approx(abs(c) ** p * base, rel=1e-12, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(samples, st.sampled_from([2, 4, 6, 8]))
def test_even_order_absolute_equals_signed(x, p):
    est = estimate_moments(x, p)
    assert est.absolute == est.signed
    prof = moment_profile(np.column_stack([x, 2 * x]), p)
    assert np.array_equal(prof.absolute, prof.signed)


@settings(max_examples=60, deadline=None)
@given(samples, st.sampled_from([1, 2, 3, 4.5]))
def test_absolute_nonnegative_and_zero_only_for_constant(x, p):
    m = estimate_moments(x, p).absolute
    assert m >= 0
    assert (m == 0) == bool(np.all(x == x[0]))


def test_profile_matches_per_series_estimates():
    x = np.random.default_rng(1).standard_normal((200, 3))
    prof = moment_profile(x, 3)
    for j in range(3):
        est = estimate_moments(x[:, j], 3)
        assert prof.absolute[j] == pytest.approx(est.absolute, rel=1e-14)
        assert prof.signed[j] == pytest.approx(est.signed, rel=1e-12)
    np.testing.assert_allclose(np.exp(prof.log_absolute), prof.absolute, rtol=1e-13)


def test_profile_at_high_order_stays_finite():
    x = np.random.default_rng(2).standard_normal((500, 2)) * 100
    prof = moment_profile(x, 400)
    assert np.all(np.isfinite(prof.log_absolute))
    assert prof.log_absolute[0] == pytest.approx(log_abs_moment(x[:, 0], 400), rel=1e-14)


def test_profile_infinite_order_has_means_only():
    prof = moment_profile(np.ones((3, 2)) * [[1.0, 2.0]], math.inf)
    assert prof.absolute is None
    np.testing.assert_array_equal(prof.means, [1.0, 2.0])


def test_kurtosis_raw_and_excess():
    raw, excess = kurtosis([-1.0, 1.0])
    assert (raw, excess) == (1.0, -2.0)
    assert all(math.isnan(v) for v in kurtosis([2.0, 2.0]))


def test_gaussian_known_values():
    assert gaussian_abs_moment(1, 2) == pytest.approx(1.0, abs=1e-12)
    assert gaussian_abs_moment(1, 4) == pytest.approx(3.0, abs=1e-12)
    assert gaussian_abs_moment(1, 3) == pytest.approx(2 * math.sqrt(2 / math.pi), rel=1e-12)


@pytest.mark.parametrize("p", sorted(QUAD_UNIT_MOMENTS))
def test_gaussian_matches_frozen_quadrature(p):
    assert gaussian_abs_moment(1, p) == pytest.approx(QUAD_UNIT_MOMENTS[p], rel=1e-9)


@pytest.mark.parametrize("p", [2.5, 7])
def test_gaussian_matches_live_quadrature(p):
    ref = 2 * integrate.quad(lambda x: x**p * stats.norm.pdf(x), 0, math.inf, epsrel=1e-13)[0]
    assert gaussian_abs_moment(1, p) == pytest.approx(ref, rel=1e-9)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.01, 10), st.floats(1, 30))
def test_gaussian_scaling_in_sigma(sigma, p):
    assert gaussian_abs_moment(sigma, p) == sigma**p * gaussian_abs_moment(1, p)


def test_gaussian_rejects_bad_sigma():
    with pytest.raises(ValidationError):
        gaussian_abs_moment(0, 2)
    with pytest.raises(ValidationError):
        gaussian_abs_moment(-1, 2)


def test_gaussian_log_moment_survives_huge_order():
    assert math.isfinite(gaussian_log_abs_moment(1.0, 1e6))
    assert gaussian_abs_moment(1.0, 1e6) == math.inf


@pytest.mark.parametrize("p,tol", [(100, 0.01), (10, 0.05)])
def test_stirling_accuracy(p, tol):
    exact = gaussian_abs_moment(1, p)
    assert gaussian_abs_moment_stirling(1, p) == pytest.approx(exact, rel=tol)


def test_stirling_small_order_is_finite():
    v = gaussian_abs_moment_stirling(1, 2)
    assert 0 < v < math.inf


def test_stirling_error_shrinks_with_order():
    errs = [abs(gaussian_log_abs_moment_stirling(1, p) - gaussian_log_abs_moment(1, p)) for p in (2, 10, 100, 1000)]
    assert errs == sorted(errs, reverse=True)


def test_stirling_rejects_low_order():
    with pytest.raises(ValidationError):
        gaussian_abs_moment_stirling(1, 1.5)


def test_gaussian_profile_signed_forms():
    prof = MomentProfile.from_gaussian([0.1, 0.2], [1.0, 2.0], 3)
    np.testing.assert_array_equal(prof.signed, 0.0)
    prof4 = MomentProfile.from_gaussian([0.1, 0.2], [1.0, 2.0], 4)
    np.testing.assert_allclose(prof4.absolute, [3.0, 48.0], rtol=1e-12)
    assert prof4.to_dict()["p"] == 4.0
