import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from mipipe.datamodel import Design
from mipipe.moderate import fit_eb_prior, moderate, moderate_variance, project_variance
from mipipe.pool import PooledFit
from mipipe.specfun import digamma, log_gamma, student_cdf, student_sf2, trigamma, trigamma_inverse

EULER_GAMMA = 0.57721566490153286


# ---- special functions ----------------------------------------------------


def test_known_values():
    assert abs(trigamma(1.0) - math.pi**2 / 6) <= 1e-10
    assert abs(digamma(1.0) + EULER_GAMMA) <= 1e-10
    assert abs(log_gamma(5.0) - math.log(24)) <= 1e-12
    assert abs(log_gamma(0.5) - 0.5 * math.log(math.pi)) <= 1e-12


def test_trigamma_series_oracle():
    # sum_{k>=0} 1/(x+k)^2 with an Euler-Maclaurin tail
    for x in (0.3, 1.7, 12.0):
        K = 2000
        head = sum(1.0 / (x + k) ** 2 for k in range(K))
        z = x + K
        tail = 1 / z + 1 / (2 * z**2) + 1 / (6 * z**3)
        assert trigamma(x) == pytest.approx(head + tail, rel=1e-10)


@pytest.mark.parametrize("fn", [digamma, trigamma, log_gamma])
def test_domain_errors(fn):
    with pytest.raises(ValueError):
        fn(0.0)
    with pytest.raises(ValueError):
        fn(-1.5)


def test_trigamma_inverse_residual():
    ys = np.logspace(-3, 3, 241)
    x = trigamma_inverse(ys)
    assert np.max(np.abs(trigamma(x) - ys) / ys) <= 1e-8
    for y in (1e-3, 0.7, 1e3):
        assert abs(trigamma(trigamma_inverse(y)) - y) / y <= 1e-8
    with pytest.raises(ValueError):
        trigamma_inverse(0.0)


def test_student_cdf():
    for nu in (1, 3.5, 30, 1e6):
        assert student_cdf(0.0, nu) == 0.5
    t = np.linspace(-6, 6, 25)
    for nu in (1.0, 4.0, 17.5):
        assert np.allclose(student_cdf(t, nu), stats.t.cdf(t, nu), rtol=1e-10, atol=1e-14)
    assert student_sf2(2.306, 8) == pytest.approx(0.05, abs=1e-3)
    with pytest.raises(ValueError):
        student_cdf(1.0, 0.0)


# ---- projection -----------------------------------------------------------


def _pooled(sigma):
    sigma = np.asarray(sigma, dtype=float)
    P, I, _ = sigma.shape
    return PooledFit(np.zeros((P, I)), sigma, 3, 2)


def test_projection_examples():
    d = Design.from_groups([5, 5])
    assert project_variance(_pooled([np.diag([0.2, 0.6])]), d)[0] == pytest.approx(3.0)
    d1 = Design.from_groups([4])
    assert project_variance(_pooled([[[0.7]]]), d1)[0] == pytest.approx(2.8)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(2, 8), min_size=1, max_size=5), st.floats(1e-6, 1e6))
def test_projection_recovers_ols_scalar(sizes, s2):
    d = Design.from_groups(sizes)
    sigma = s2 * np.linalg.inv(d.XtX)
    got = project_variance(_pooled([sigma]), d)[0]
    assert got == pytest.approx(s2, rel=1e-12)


# ---- prior fit and moderation ---------------------------------------------


def test_equal_variances_give_infinite_d0():
    d0, s0 = fit_eb_prior(np.full(50, 2.0), 6)
    assert math.isinf(d0)
    # exp(mean e) where e carries the bias-correction of log s^2
    assert s0 == pytest.approx(2.0 * math.exp(-digamma(3.0) + math.log(3.0)), rel=1e-12)
    fit = moderate(np.full(50, 2.0), 6)
    assert np.all(fit.s_tilde_sq == s0)


def test_eb_recovery():
    rng = np.random.default_rng(7)
    d0, s0_sq, df, P = 4.0, 1.0, 8, 5000
    sigma2 = s0_sq * d0 / rng.chisquare(d0, P)
    s2 = sigma2 * rng.chisquare(df, P) / df
    d0_hat, s0_hat = fit_eb_prior(s2, df)
    assert abs(d0_hat / d0 - 1) <= 0.25
    assert abs(s0_hat / s0_sq - 1) <= 0.10


def test_zero_variances_excluded():
    rng = np.random.default_rng(3)
    s2 = 3.0 / rng.chisquare(3, 300) * rng.chisquare(5, 300) / 5
    with_zeros = np.concatenate([s2, np.zeros(20)])
    assert fit_eb_prior(with_zeros, 5) == fit_eb_prior(s2, 5)
    fit = moderate(with_zeros, 5)
    zero_rows = fit.s_tilde_sq[-20:]
    assert math.isfinite(fit.d0)
    assert np.allclose(zero_rows, fit.d0 * fit.s0_sq / (5 + fit.d0))
    with pytest.raises(ValueError):
        fit_eb_prior([0.0, 0.0, 1.0], 4)


def test_moderate_variance_examples():
    assert moderate_variance(2.0, 8, 4, 1.0) == pytest.approx(5 / 3)
    s2 = np.array([0.5, 1.0, 7.0])
    assert np.array_equal(moderate_variance(s2, 8, 0.0, 3.0), s2)
    assert np.all(moderate_variance(s2, 8, math.inf, 3.0) == 3.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 100), st.integers(0, 2**31), st.integers(2, 12))
def test_scale_equivariance(c, seed, df):
    g = np.random.default_rng(seed)
    s2 = g.gamma(2.0, size=200) * g.chisquare(df, 200) / df
    d0, s0 = fit_eb_prior(s2, df)
    d0c, s0c = fit_eb_prior(c * s2, df)
    if math.isinf(d0):
        assert math.isinf(d0c)
    else:
        assert d0c == pytest.approx(d0, rel=1e-8)
    assert s0c == pytest.approx(c * s0, rel=1e-8)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(1e-4, 1e4), min_size=2, max_size=30),
    st.integers(1, 20),
    st.floats(0, 100),
    st.floats(1e-3, 1e3),
)
def test_shrinkage_properties(s2, df, d0, s0):
    s2 = np.sort(np.array(s2))
    st2 = moderate_variance(s2, df, d0, s0)
    assert np.all(np.diff(st2) >= -1e-12 * st2[1:])
    lo, hi = np.minimum(s2, s0), np.maximum(s2, s0)
    assert np.all(st2 >= lo * (1 - 1e-12)) and np.all(st2 <= hi * (1 + 1e-12))
    if d0 > 0:
        tol = 1e-12 * np.maximum(s2, s0)
        moved = np.where(np.abs(st2 - s2) <= tol, 0.0, np.sign(st2 - s2))
        target = np.where(np.abs(s0 - s2) <= tol, 0.0, np.sign(s0 - s2))
        assert np.all((moved == target) | (moved == 0))
