import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import random_spd, random_stationary
from lsrm.errors import DimensionMismatch, LagOutOfRange, NonpositiveVariance, NonstationaryCoefficients
from lsrm.model import (
    ARCoefficients,
    DyadPanel,
    InnovationCov,
    assemble_block_toeplitz,
    check_stationary,
    derived_covariances,
    glm_covariance_approximation,
    linear_predictor,
    probit_innovation_from,
    probit_link_derivative,
    stationary_blocks,
    wong_inverse,
    wong_transform,
)
from lsrm.numerics import rng_stream

coef = st.floats(-0.95, 0.95)


def _panel(A=3, T=2, p=2, family="gaussian", seed=0):
    rng = rng_stream(seed)
    y = rng.normal(size=(A, A, T))
    if family == "binary":
        y = (y > 0).astype(float)
    x = rng.normal(size=(A, A, T, p))
    obs = np.ones((A, A, T), dtype=bool)
    return DyadPanel([f"c{k}" for k in range(A)], y, obs, x, [f"x{k}" for k in range(p)], family)


def test_panel_diagonal_is_unobserved():
    p = _panel()
    assert p.A == 3 and p.T == 2 and p.p == 2
    assert not p.observed[0, 0, 0]
    assert np.isnan(p.y[1, 1, 1])
    assert p.n_missing == 0
    assert p.time_labels == (1, 2)


def test_panel_validation():
    p = _panel()
    with pytest.raises(DimensionMismatch):
        DyadPanel(("a", "b"), p.y, p.observed, p.x, p.covariate_names)
    with pytest.raises(ValueError):
        DyadPanel(p.actor_labels, p.y, p.observed, p.x, p.covariate_names, "binary")
    x = np.array(p.x)
    x[0, 1, 0, 0] = np.nan
    with pytest.raises(ValueError):
        DyadPanel(p.actor_labels, p.y, p.observed, x, p.covariate_names)


def test_panel_with_observed_masks_y():
    p = _panel()
    mask = np.array(p.observed)
    mask[0, 1, 0] = False
    q = p.with_observed(mask)
    assert np.isnan(q.y[0, 1, 0]) and q.n_missing == 1
    assert_allclose(q.x, p.x)


def test_stationary_blocks_structure(rng):
    phi = random_stationary(rng)
    gamma = random_spd(rng)
    sc = stationary_blocks(phi, gamma, 4)
    s0 = sc.block(0)
    assert_allclose(s0, phi @ s0 @ phi.T + gamma, atol=1e-12)
    for d in range(1, 4):
        assert_allclose(sc.block(d), s0 @ np.linalg.matrix_power(phi.T, d), atol=1e-12)
    m = sc.assembled
    assert m.shape == (8, 8)
    assert_allclose(m, m.T, atol=1e-14)
    assert np.all(np.linalg.eigvalsh(m) > 0)
    assert_allclose(m[0:2, 4:6], sc.block(2))
    assert_allclose(m[4:6, 0:2], sc.block(2).T)
    with pytest.raises(LagOutOfRange):
        sc.block(4)
    with pytest.raises(NonstationaryCoefficients):
        stationary_blocks(np.eye(2) * 1.01, gamma, 3)


def test_stationary_blocks_empirical(rng):
    # simulate a long bivariate VAR(1) and compare sample lag covariances
    phi = np.array([[0.5, 0.2], [-0.1, 0.3]])
    gamma = np.array([[1.0, 0.3], [0.3, 0.5]])
    sc = stationary_blocks(phi, gamma, 3)
    n = 200000
    e = rng.multivariate_normal(np.zeros(2), gamma, size=n)
    x = np.zeros((n, 2))
    for t in range(1, n):
        x[t] = phi @ x[t - 1] + e[t]
    x = x[1000:]
    emp1 = x[:-1].T @ x[1:] / (len(x) - 1)
    assert_allclose(x.T @ x / len(x), sc.block(0), atol=0.03)
    assert_allclose(emp1, sc.block(1), atol=0.03)


def test_assemble_block_toeplitz_small():
    b0 = np.array([[1.0, 0.5], [0.5, 2.0]])
    b1 = np.array([[0.1, 0.2], [0.3, 0.4]])
    m = assemble_block_toeplitz([b0, b1])
    assert_allclose(m, [[1.0, 0.5, 0.1, 0.2], [0.5, 2.0, 0.3, 0.4],
                        [0.1, 0.3, 1.0, 0.5], [0.2, 0.4, 0.5, 2.0]])


def test_check_stationary():
    ar = ARCoefficients.from_values(0.5, 0, 0, 0.5, 0.99, 0.02)
    assert check_stationary(ar) == {"sr": True, "gg": False}
    assert check_stationary(np.array([[0.2, 0.0], [0.0, 0.3]]))


def test_ar_coefficients_require_exchangeable_gg():
    with pytest.raises(ValueError):
        ARCoefficients(np.zeros((2, 2)), np.array([[0.1, 0.2], [0.3, 0.1]]))


@settings(max_examples=200, deadline=None)
@given(coef, coef, st.floats(-0.99, 0.99))
def test_probit_innovation_gives_unit_variance(phi_g, phi_gg, rho):
    g2, ggc, valid = probit_innovation_from(phi_g, phi_gg, rho)
    if not valid or abs(phi_g) + abs(phi_gg) >= 1:
        return
    s0 = stationary_blocks([[phi_g, phi_gg], [phi_gg, phi_g]], [[g2, ggc], [ggc, g2]], 2).block(0)
    assert_allclose(s0, [[1.0, rho], [rho, 1.0]], atol=1e-10)


def test_probit_innovation_zero_coefficients():
    assert probit_innovation_from(0.0, 0.0, 0.4) == (1.0, 0.4, True)
    assert not probit_innovation_from(0.9, 0.3, -0.9)[2]


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_wong_round_trip(a, b):
    g2, lam = wong_transform(a, b)
    assert g2 > 0 and abs(lam) < 1
    a2, b2 = wong_inverse(g2, lam)
    assert abs(a2 - a) <= 1e-12 * max(1.0, a) and abs(b2 - b) <= 1e-12 * max(1.0, b)


def test_wong_examples_and_errors():
    assert wong_transform(2.0, 2.0) == (1.0, 0.0)
    assert wong_transform(3.0, 1.0) == (1.0, 0.5)
    with pytest.raises(NonpositiveVariance):
        wong_transform(0.0, 1.0)
    with pytest.raises(NonpositiveVariance):
        wong_inverse(1.0, 1.0)


def test_derived_covariances_table_mapping():
    ssr = stationary_blocks(np.array([[0.5, 0.1], [0.2, 0.4]]), np.array([[1.0, 0.3], [0.3, 2.0]]), 3)
    sgg = stationary_blocks(np.array([[0.6, 0.1], [0.1, 0.6]]), np.array([[1.0, 0.4], [0.4, 1.0]]), 3)
    d0 = derived_covariances(ssr, sgg, 0)
    b = ssr.block(0)
    assert d0.sigma_sr == d0.sigma_rs == b[0, 1]
    assert d0.same_dyad == pytest.approx(b[0, 0] + b[1, 1] + sgg.block(0)[0, 0])
    assert d0.reciprocal == pytest.approx(sgg.block(0)[0, 1] + 2 * b[0, 1])
    assert d0.rho_sr == pytest.approx(b[0, 1] / np.sqrt(b[0, 0] * b[1, 1]))
    d2 = derived_covariances(ssr, sgg, 2)
    assert d2.sigma_sr == pytest.approx(ssr.block(2)[0, 1])
    assert d2.sigma_rs == pytest.approx(ssr.block(2)[1, 0])
    assert "rho_sr" not in d2.as_dict()
    with pytest.raises(LagOutOfRange):
        derived_covariances(ssr, sgg, 3)


def test_derived_covariances_zero_phi_equals_gamma():
    gsr = np.array([[1.5, -0.2], [-0.2, 0.7]])
    d = derived_covariances(stationary_blocks(np.zeros((2, 2)), gsr, 1),
                            stationary_blocks(np.zeros((2, 2)), np.eye(2), 1))
    assert (d.sigma_s, d.sigma_sr, d.sigma_r) == (1.5, -0.2, 0.7)


def test_linear_predictor_matches_loop():
    p = _panel(A=4, T=3, p=2, seed=3)
    beta = np.array([[1.0, -0.5], [0.2, 0.3], [0.0, 2.0]])
    eta, pairs = linear_predictor(p, beta)
    for i in range(4):
        for j in range(4):
            for t in range(3):
                if i != j:
                    assert eta[i, j, t] == pytest.approx(sum(beta[t, k] * p.x[i, j, t, k] for k in range(2)))
    assert pairs.shape == (6, 6)
    assert pairs[0, 0] == eta[0, 1, 0] and pairs[0, 1] == eta[1, 0, 0] and pairs[0, 2] == eta[0, 1, 1]
    eta2, _ = linear_predictor(p.x, np.array([1.0, 2.0]))
    assert eta2[0, 1, 2] == pytest.approx(p.x[0, 1, 2, 0] + 2 * p.x[0, 1, 2, 1])
    with pytest.raises(DimensionMismatch):
        linear_predictor(p, np.ones((2, 2)))


def test_glm_covariance_approximation():
    assert glm_covariance_approximation(0.4, 1.0, 2.0) == 0.4
    v = glm_covariance_approximation(0.4, 0.0, 0.0, probit_link_derivative)
    assert v == pytest.approx(0.4 / (2 * np.pi))


def test_innovation_cov_from_values():
    inn = InnovationCov.from_values(1.0, 0.2, 2.0, 1.5, 0.4)
    assert inn.gamma2_g == 1.5 and inn.lambda_gg == pytest.approx(0.4)
    assert inn.gg[0, 1] == pytest.approx(0.6)
    assert inn.gg_is_positive_definite()


@settings(max_examples=300, deadline=None)
@given(coef, coef, st.floats(-0.999, 0.999))
def test_probit_innovation_valid_whenever_stationary(phi_g, phi_gg, rho):
    # eigenvalues of the derived covariance are (1 +/- rho)(1 - (phi_g +/- phi_gg)^2)
    stationary = abs(phi_g + phi_gg) < 1 and abs(phi_g - phi_gg) < 1
    g2, ggc, valid = probit_innovation_from(phi_g, phi_gg, rho)
    if stationary:
        assert valid or min(g2 - abs(ggc), g2) < 1e-12
    lam = sorted([(1 + rho) * (1 - (phi_g + phi_gg) ** 2), (1 - rho) * (1 - (phi_g - phi_gg) ** 2)])
    assert_allclose(sorted([g2 - ggc, g2 + ggc]), lam, atol=1e-12)
