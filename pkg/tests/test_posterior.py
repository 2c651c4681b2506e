import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import linalg as sla

from lsrm.errors import ChainTooShort, EmptyChain
from lsrm.io import format_trace, parse_trace
from lsrm.model import ARCoefficients, InnovationCov, ModelParameters
from lsrm.numerics import rng_stream
from lsrm.posterior import (
    SCALAR_NAMES,
    ChainLayout,
    PosteriorChain,
    derived_posterior,
    effective_sample_size,
    quantile_triplet,
    summarize,
    summarize_derived,
    trace_export,
)

LAYOUT = ChainLayout("gaussian", ("a", "b", "c"), (1, 2), ("intercept",), missing_cells=((0, 1, 1),))


def _params(rng, phi_zero=False):
    ar = ARCoefficients.from_values() if phi_zero else ARCoefficients.from_values(
        *rng.uniform(-0.4, 0.4, 4), rng.uniform(0, 0.5), rng.uniform(-0.3, 0.3))
    a = rng.normal(size=(2, 2))
    innov = InnovationCov(a @ a.T + np.eye(2), np.array([[1.2, 0.3], [0.3, 1.2]]))
    return ModelParameters(rng.normal(size=(2, 1)), ar, innov, rng.normal(size=(3, 2, 2)))


def _chain(n=20, seed=0, phi_zero=False, layout=LAYOUT):
    rng = rng_stream(seed)
    rows = []
    for _ in range(n):
        z = rng.normal(size=(3, 3, 2))
        rows.append(layout.flatten(_params(rng, phi_zero), z, {"phi_sr": True, "gamma_gg": False}))
    return PosteriorChain(layout, np.array(rows).reshape(n, len(layout.names)), np.arange(1, n + 1), {"seed": seed})


def _sorted_quantile(x, p):
    s = sorted(x)
    h = (len(s) - 1) * p
    lo = int(np.floor(h))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def test_layout_names():
    n = LAYOUT.names
    assert n[:2] == ("beta:1:intercept", "beta:2:intercept")
    assert n[2:2 + len(SCALAR_NAMES)] == SCALAR_NAMES
    assert "s:c:2" in n and "r:a:1" in n and "ymis:a:b:2" in n and n[-1] == "acc:rho_gg"
    assert ChainLayout.from_dict(LAYOUT.to_dict()) == LAYOUT


def test_flatten_round_trip():
    rng = rng_stream(1)
    p = _params(rng)
    z = rng.normal(size=(3, 3, 2))
    row = LAYOUT.flatten(p, z, {"phi_sr": False})
    q = LAYOUT.params_from_row(row)
    assert_allclose(q.beta, p.beta)
    assert_allclose(q.ar.sr, p.ar.sr)
    assert_allclose(q.innov.gg, p.innov.gg)
    assert_allclose(q.sr_effects, p.sr_effects)
    chain = PosteriorChain(LAYOUT, row[None], [1])
    assert chain.imputed(0) == {(0, 1, 1): z[0, 1, 1]}
    assert chain.flags(0) == {"phi_sr": False}


def test_summarize_constant_chain():
    c = _chain(5)
    c.values[:] = 2.5
    assert all(v == (2.5, 2.5, 2.5) for v in summarize(c, "phi_*").values())


def test_quantiles_of_one_to_hundred():
    x = np.arange(1, 101, dtype=float)
    expect = tuple(_sorted_quantile(x, p) for p in (0.025, 0.5, 0.975))
    assert quantile_triplet(x) == pytest.approx(expect, abs=1e-12)
    assert quantile_triplet(x) == pytest.approx((3.475, 50.5, 97.525), abs=1e-12)
    assert quantile_triplet([-3.0, 3.0])[1] == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.randoms())
def test_quantiles_permutation_invariant(xs, r):
    ys = list(xs)
    r.shuffle(ys)
    assert quantile_triplet(xs) == quantile_triplet(ys)
    assert quantile_triplet(xs)[1] == pytest.approx(_sorted_quantile(xs, 0.5), rel=1e-12, abs=1e-9)


def test_summarize_selectors_and_empty():
    c = _chain(10)
    assert set(summarize(c, "beta:*")) == {"beta:1:intercept", "beta:2:intercept"}
    assert list(summarize(c, ["phi_s"])) == ["phi_s"]
    assert "acc:phi_sr" not in summarize(c)
    with pytest.raises(EmptyChain):
        summarize(_chain(0))


def test_derived_posterior_zero_phi_equals_gamma():
    c = _chain(10, phi_zero=True)
    d = derived_posterior(c)
    assert_allclose(d["sigma2_s"], c.column("gamma2_s"), rtol=1e-12)
    assert_allclose(d["sigma_sr"], c.column("gamma_sr"), rtol=1e-12, atol=1e-14)
    assert_allclose(d["sigma2_g"], c.column("gamma2_g"), rtol=1e-12)


def test_derived_posterior_single_draw_lyapunov():
    c = _chain(1, seed=5)
    p = c.params(0)
    s = sla.solve_discrete_lyapunov(p.ar.sr, p.innov.sr)
    d = derived_posterior(c)
    assert d["sigma2_s"][0] == pytest.approx(s[0, 0], rel=1e-10)
    assert d["sigma_sr"][0] == pytest.approx(s[0, 1], rel=1e-10)
    assert d["rho_sr"][0] == pytest.approx(s[0, 1] / np.sqrt(s[0, 0] * s[1, 1]), rel=1e-10)
    g = sla.solve_discrete_lyapunov(p.ar.gg, p.innov.gg)
    assert d["rho_gg"][0] == pytest.approx(g[0, 1] / g[0, 0], rel=1e-10)
    assert np.all(np.abs(derived_posterior(_chain(30))["rho_sr"]) < 1)
    assert set(summarize_derived(c)) >= {"sigma2_s", "rho_gg"}


def test_ess_independent_and_ar1():
    rng = rng_stream(3)
    x = rng.normal(size=5000)
    assert abs(effective_sample_size(x) / 5000 - 1) < 0.15
    n, phi = 10000, 0.5
    e = rng.normal(size=n)
    ar = np.empty(n)
    ar[0] = e[0] / np.sqrt(1 - phi ** 2)
    for t in range(1, n):
        ar[t] = phi * ar[t - 1] + e[t]
    assert abs(effective_sample_size(ar) / (n / 3) - 1) < 0.15
    assert effective_sample_size(np.full(50, 2.0)) == 1.0
    with pytest.raises(ChainTooShort):
        effective_sample_size(np.arange(9.0))


@settings(max_examples=30, deadline=None)
@given(st.integers(10, 300), st.integers(0, 2**31))
def test_ess_never_exceeds_length(n, seed):
    x = rng_stream(seed).normal(size=n).cumsum() * (seed % 2) + rng_stream(seed, 1).normal(size=n)
    assert 1.0 <= effective_sample_size(x) <= n


def test_trace_export_round_trip():
    c = _chain(12)
    scans, vals = trace_export(c, "phi_s")
    assert len(vals) == 12 and vals[0] == c.params(0).ar.sr[0, 0]
    s2, v2 = parse_trace(format_trace(scans, vals))
    assert np.array_equal(s2, scans) and np.array_equal(v2, vals)


def test_draws_property():
    c = _chain(3)
    draws = c.draws
    assert [d.scan for d in draws] == [1, 2, 3]
    assert_allclose(draws[1].params.beta, c.params(1).beta)
    assert c.acceptance_rates() == {"phi_sr": 1.0, "gamma_gg": 0.0}
