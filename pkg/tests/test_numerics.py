import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import linalg as sla
from scipy import stats

from conftest import random_spd, random_stationary
from lsrm.errors import (
    DimensionMismatch,
    InvalidDegreesOfFreedom,
    NonpositiveHyperparameter,
    NonpositiveVariance,
    NonstationaryCoefficients,
    NotPositiveDefinite,
)
from lsrm.numerics import (
    cholesky,
    inverse_gamma_logpdf,
    inverse_gamma_sample,
    inverse_wishart_logpdf,
    inverse_wishart_sample,
    mvn_logpdf,
    mvn_sample,
    mvn_sample_precision,
    rng_stream,
    solve_discrete_lyapunov,
    spd_inverse,
    truncated_normal_sample,
    wishart_sample,
)


def test_cholesky_known_factor():
    L = cholesky([[4.0, 2.0], [2.0, 3.0]])
    assert_allclose(L, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], atol=1e-15)


def test_cholesky_rejects_indefinite_and_asymmetric():
    with pytest.raises(NotPositiveDefinite):
        cholesky([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotPositiveDefinite):
        cholesky([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(DimensionMismatch):
        cholesky(np.ones((2, 3)))


def test_spd_inverse(rng):
    m = random_spd(rng, 4)
    assert_allclose(spd_inverse(m) @ m, np.eye(4), atol=1e-12)


def test_mvn_logpdf_matches_scipy(rng):
    cov = random_spd(rng, 3)
    mean = rng.normal(size=3)
    x = rng.normal(size=(5, 3))
    ours = mvn_logpdf(x, mean, cov)
    ref = stats.multivariate_normal(mean, cov).logpdf(x)
    assert_allclose(ours, ref, rtol=1e-12)
    assert isinstance(mvn_logpdf(x[0], mean, cov), float)
    with pytest.raises(DimensionMismatch):
        mvn_logpdf(np.zeros(2), mean, cov)


def test_mvn_logpdf_one_dim_integrates_to_one():
    grid = np.linspace(-12, 12, 20001)
    dens = np.exp(mvn_logpdf(grid[:, None], [0.3], [[1.7]]))
    assert abs(np.trapezoid(dens, grid) - 1.0) < 1e-8


def test_mvn_samplers_moments(rng):
    cov = np.array([[2.0, 0.6], [0.6, 1.0]])
    draws = np.array([mvn_sample([1.0, -1.0], cov, rng) for _ in range(20000)])
    assert_allclose(draws.mean(axis=0), [1.0, -1.0], atol=0.05)
    assert_allclose(np.cov(draws.T), cov, atol=0.06)
    prec = np.linalg.inv(cov)
    lin = prec @ np.array([0.5, 2.0])
    draws = np.array([mvn_sample_precision(prec, lin, rng)[0] for _ in range(20000)])
    assert_allclose(draws.mean(axis=0), [0.5, 2.0], atol=0.05)
    assert_allclose(np.cov(draws.T), cov, atol=0.06)


def test_truncated_normal_half_normal_mean(rng):
    d = truncated_normal_sample(np.zeros(100000), 1.0, "right", rng)
    assert np.all(d > 0)
    assert abs(d.mean() - np.sqrt(2 / np.pi)) < 0.01


def test_truncated_normal_left_side_and_scalar(rng):
    d = truncated_normal_sample(np.full(1000, 2.0), 0.5, "left", rng)
    assert np.all(d < 0)
    v = truncated_normal_sample(0.0, 1.0, "right", rng)
    assert isinstance(v, float) and v > 0


def test_truncated_normal_matches_scipy_truncnorm(rng):
    mean, sd = -1.3, 0.7
    d = truncated_normal_sample(np.full(20000, mean), sd ** 2, "right", rng)
    ref = stats.truncnorm(a=(0 - mean) / sd, b=np.inf, loc=mean, scale=sd)
    assert stats.kstest(d, ref.cdf).pvalue > 1e-3


def test_truncated_normal_far_tail(rng):
    # standardised bound 8: exponential-rejection branch
    d = truncated_normal_sample(np.full(20000, -8.0), 1.0, "right", rng)
    assert np.all(d > 0)
    expect = stats.truncnorm(a=8.0, b=np.inf, loc=-8.0).mean()
    assert abs(d.mean() - expect) < 0.005
    d = truncated_normal_sample(np.full(100, 40.0), 1.0, "left", rng)
    assert np.all(d < 0) and np.all(np.isfinite(d))


def test_truncated_normal_boolean_sides(rng):
    side = np.array([True, False] * 500)
    d = truncated_normal_sample(np.zeros(1000), 1.0, side, rng)
    assert np.all((d > 0) == side)
    with pytest.raises(NonpositiveVariance):
        truncated_normal_sample(0.0, 0.0, "right", rng)


def test_inverse_gamma(rng):
    d = inverse_gamma_sample(3.0, 2.0, rng, size=200000)
    assert abs(d.mean() - 1.0) < 0.01
    assert_allclose(inverse_gamma_logpdf(1.3, 3.0, 2.0), stats.invgamma(a=3.0, scale=2.0).logpdf(1.3))
    assert inverse_gamma_logpdf(-1.0, 3.0, 2.0) == -np.inf
    with pytest.raises(NonpositiveHyperparameter):
        inverse_gamma_sample(0.0, 1.0, rng)


def test_inverse_wishart_mean_and_density(rng):
    draws = np.array([inverse_wishart_sample(10, np.eye(2), rng) for _ in range(20000)])
    assert_allclose(draws.mean(axis=0), np.eye(2) / 7, atol=0.005)
    scale = np.array([[2.0, 0.3], [0.3, 0.5]])
    x = np.array([[0.8, 0.1], [0.1, 1.1]])
    # scipy's scale is the inverse of ours
    ref = stats.invwishart(df=6, scale=np.linalg.inv(scale)).logpdf(x)
    assert_allclose(inverse_wishart_logpdf(x, 6, scale), ref, rtol=1e-12)
    assert inverse_wishart_logpdf(-np.eye(2), 6, scale) == -np.inf
    with pytest.raises(InvalidDegreesOfFreedom):
        wishart_sample(0.5, np.eye(2), rng)


def test_wishart_mean(rng):
    scale = np.array([[1.0, 0.4], [0.4, 2.0]])
    draws = np.array([wishart_sample(5, scale, rng) for _ in range(20000)])
    assert_allclose(draws.mean(axis=0), 5 * scale, rtol=0.03, atol=0.03)


def test_lyapunov_against_scipy_and_fixed_point(rng):
    for _ in range(20):
        phi = random_stationary(rng)
        gamma = random_spd(rng)
        s = solve_discrete_lyapunov(phi, gamma)
        assert_allclose(s, sla.solve_discrete_lyapunov(phi, gamma), rtol=1e-9, atol=1e-12)
        it = np.zeros((2, 2))
        for _ in range(2000):
            it = phi @ it @ phi.T + gamma
        assert_allclose(s, it, rtol=1e-8)


def test_lyapunov_rejects_unit_root():
    with pytest.raises(NonstationaryCoefficients):
        solve_discrete_lyapunov(np.eye(2), np.eye(2))


def test_rng_stream_reproducible_and_distinct():
    a = rng_stream(5, 0).random(4)
    assert np.array_equal(a, rng_stream(5, 0).random(4))
    assert not np.array_equal(a, rng_stream(5, 1).random(4))
    assert not np.array_equal(a, rng_stream(6, 0).random(4))


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0.05, 4.0), st.booleans(), st.integers(0, 2**31))
def test_truncated_normal_respects_side(mean, var, right, seed):
    d = truncated_normal_sample(np.full(50, mean), var, "right" if right else "left",
                                rng_stream(seed))
    assert np.all(d > 0) if right else np.all(d < 0)
