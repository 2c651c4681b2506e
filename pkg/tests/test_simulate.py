import numpy as np
import pytest
from numpy.testing import assert_allclose

from lsrm.errors import DesignInvalid
from lsrm.model import ARCoefficients, InnovationCov, derived_covariances, stationary_blocks
from lsrm.numerics import rng_stream
from lsrm.simulate import SimulationDesign, _var_paths, recovery_design, simulate_effects, simulate_panel

AR = ARCoefficients.from_values(0.6, 0.1, -0.2, 0.4, 0.5, 0.2)
INNOV = InnovationCov.from_values(1.0, 0.3, 0.8, 1.2, 0.25)


def test_tiny_innovations_give_tiny_effects(rng):
    inn = InnovationCov(1e-12 * np.eye(2), 1e-12 * np.eye(2))
    sr, g = simulate_effects(ARCoefficients.from_values(), inn, 5, 3, rng)
    assert np.max(np.abs(sr)) < 1e-4 and np.max(np.abs(g)) < 1e-4


def test_actor_paths_match_lag_blocks(rng):
    sr = _var_paths(AR.sr, INNOV.sr, 100000, 3, rng)
    blocks = stationary_blocks(AR.sr, INNOV.sr, 3)
    for d in range(3):
        emp = np.einsum("ai,aj->ij", sr[:, 0], sr[:, d]) / len(sr)
        scale = np.max(np.abs(blocks.block(0)))
        assert_allclose(emp, blocks.block(d), atol=0.02 * scale)


def test_dyad_residuals_are_exchangeable(rng):
    _, g = simulate_effects(AR, INNOV, 60, 2, rng)
    I, J = np.triu_indices(60, 1)
    a, b = g[I, J], g[J, I]
    assert abs(a.var() - b.var()) < 0.05 * a.var()
    assert abs(np.mean(a[:, 0] * b[:, 1]) - np.mean(b[:, 0] * a[:, 1])) < 0.05


def test_zero_signal_panel():
    inn = InnovationCov(1e-14 * np.eye(2), 1e-14 * np.eye(2))
    d = SimulationDesign(A=4, T=2, p=1, beta=np.zeros(1), innov=inn)
    sim = simulate_panel(d, rng_stream(0))
    assert np.nanmax(np.abs(sim.panel.y)) < 1e-5


def test_binary_null_panel_is_balanced():
    d = SimulationDesign(A=30, T=4, p=1, beta=np.zeros(1), family="binary", rho_gg=0.0,
                         innov=InnovationCov(1e-14 * np.eye(2), np.eye(2)), sr_enabled=False)
    sim = simulate_panel(d, rng_stream(1))
    y = sim.panel.y[sim.panel.observed]
    assert set(np.unique(y)) == {0.0, 1.0}
    assert abs(y.mean() - 0.5) < 3 * 0.5 / np.sqrt(y.size / 1.5)


def test_missing_fraction_and_truth():
    sim = simulate_panel(recovery_design(A=6, T=3, missing_fraction=0.25), rng_stream(2))
    n = 6 * 5 * 3
    assert sim.panel.n_missing == round(0.25 * n)
    miss = ~sim.panel.observed & ~np.eye(6, dtype=bool)[:, :, None]
    assert np.all(np.isfinite(sim.complete_y[miss]))
    assert sim.truth.sr_effects.shape == (6, 3, 2)


def test_covariate_generators():
    c = simulate_panel(SimulationDesign(A=4, T=3, covariate_generator="constant"), rng_stream(0))
    x = c.panel.x
    assert np.all(x[..., 0][~np.eye(4, dtype=bool)] == 1)
    assert np.all(x[0, 1, :, 1] == x[0, 1, 0, 1])
    tab = np.arange(4 * 4 * 3 * 2, dtype=float).reshape(4, 4, 3, 2)
    t = simulate_panel(SimulationDesign(A=4, T=3, covariate_generator="table", covariate_table=tab),
                       rng_stream(0))
    assert t.panel.x[1, 2, 0, 1] == tab[1, 2, 0, 1]


def test_design_validation():
    with pytest.raises(DesignInvalid):
        SimulationDesign(ar=ARCoefficients.from_values(1.1))
    with pytest.raises(DesignInvalid):
        SimulationDesign(missing_fraction=1.0)
    with pytest.raises(DesignInvalid):
        SimulationDesign(beta=np.zeros(3))
    with pytest.raises(DesignInvalid):
        SimulationDesign(covariate_generator="table")


def test_replicate_covariances_match_table():
    """Every lag-0 and lag-1 cell against replicate panels, within 3 MC SE."""
    d = SimulationDesign(A=4, T=2, p=1, beta=np.zeros(1), ar=AR, innov=INNOV)
    sc = derived_covariances(stationary_blocks(AR.sr, INNOV.sr, 2),
                             stationary_blocks(AR.gg, INNOV.gg, 2), 0)
    s1 = derived_covariances(stationary_blocks(AR.sr, INNOV.sr, 2),
                             stationary_blocks(AR.gg, INNOV.gg, 2), 1)
    rng = rng_stream(77)
    n = 20000
    y = np.empty((n, 4, 4, 2))
    for k in range(n):
        y[k] = np.nan_to_num(simulate_panel(d, rng).panel.y)
    cases = {
        "var": (y[:, 0, 1, 0], y[:, 0, 1, 0], sc.same_dyad),
        "reciprocal": (y[:, 0, 1, 0], y[:, 1, 0, 0], sc.reciprocal),
        "same sender": (y[:, 0, 1, 0], y[:, 0, 2, 0], sc.sigma_s),
        "same receiver": (y[:, 0, 1, 0], y[:, 2, 1, 0], sc.sigma_r),
        "sender is receiver": (y[:, 0, 1, 0], y[:, 2, 0, 0], sc.sigma_sr),
        "lag same dyad": (y[:, 0, 1, 0], y[:, 0, 1, 1], s1.same_dyad),
        "lag reciprocal": (y[:, 0, 1, 0], y[:, 1, 0, 1], s1.reciprocal),
        "lag sender": (y[:, 0, 1, 0], y[:, 0, 2, 1], s1.sigma_s),
        "lag receiver": (y[:, 0, 1, 0], y[:, 2, 1, 1], s1.sigma_r),
        "lag s then r": (y[:, 0, 1, 0], y[:, 2, 0, 1], s1.sigma_sr),
        "lag r then s": (y[:, 0, 1, 0], y[:, 1, 2, 1], s1.sigma_rs),
        "disjoint": (y[:, 0, 1, 0], y[:, 2, 3, 0], 0.0),
    }
    for name, (a, b, expect) in cases.items():
        prod = (a - a.mean()) * (b - b.mean())
        se = prod.std() / np.sqrt(n)
        assert abs(prod.mean() - expect) < 3 * se, name
