"""Probit-family sampler: latent Gaussian responses layered over the Gaussian steps.

The latent ``theta`` takes the place of the response in steps 1-5 of
:mod:`lsrm.gaussian`.  Its dyadic covariance is pinned to a correlation
matrix, so ``Gamma_gg`` is never sampled; it is derived from
``(phi_g, phi_gg, rho_gg)`` after every change to those parameters.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .errors import ConfigInvalid
from .gaussian import (
    ChainState,
    SamplerConfig,
    Workspace,
    _drive,
    _initial_params,
    _mh,
    _pair_means,
    ar_path_loglik,
    conditional_pair_moments,
    update_beta,
    update_gamma_sr,
    update_phi_gg,
    update_phi_sr,
    update_sr,
)
from .model import ARCoefficients, DyadPanel, InnovationCov, ModelParameters, gg_matrix, probit_innovation_from
from .numerics import rng_stream, truncated_normal_sample
from .priors import PriorSpec


def derived_gamma_gg(phi_gg, rho: float):
    """Innovation covariance keeping unit stationary variances; None if invalid."""
    phi_gg = np.asarray(phi_gg, dtype=float)
    if not abs(rho) < 1.0:
        return None
    g2, ggc, valid = probit_innovation_from(phi_gg[0, 0], phi_gg[0, 1], rho)
    return gg_matrix(g2, ggc) if valid else None


def correlation_matrix(rho: float) -> np.ndarray:
    return np.array([[1.0, rho], [rho, 1.0]])


def theta_signs_ok(theta, panel: DyadPanel) -> bool:
    """True when every observed outcome agrees with the sign of ``theta``."""
    obs = panel.observed
    y = panel.y[obs]
    th = np.asarray(theta)[obs]
    return bool(np.all((th > 0) == (y == 1)) and np.all(th != 0))


def update_theta(state: ChainState, ws: Workspace, rng, truncate: bool = True) -> np.ndarray:
    """Gibbs draw of the latent responses, one time point at a time.

    For every dyad the pair ``(theta_ij, theta_ji)`` has the bivariate
    conditional used for missing Gaussian responses; each coordinate is drawn
    from its univariate conditional, truncated to the side given by ``y``
    (unrestricted where ``y`` is missing).
    """
    theta = np.array(state.z, dtype=float)
    params = state.params
    if ws.D == 0:
        return theta
    T = ws.T
    mu = _pair_means(ws, params)
    tp = ws.pairs(theta)
    obs = ws.pairs(ws.observed)
    up = ws.pairs(ws.y_filled) == 1.0
    phi = params.ar.gg
    gamma = params.innov.gg
    sigma0 = correlation_matrix(params.rho_gg or 0.0)
    for t in range(T):
        g_prev = tp[:, t - 1] - mu[:, t - 1] if t > 0 else None
        g_next = tp[:, t + 1] - mu[:, t + 1] if t < T - 1 else None
        m, v = conditional_pair_moments(t, T, mu[:, t], g_prev, g_next, phi, gamma, sigma0)
        for k in (0, 1):
            o = 1 - k
            cm = m[:, k] + v[k, o] / v[o, o] * (tp[:, t, o] - m[:, o])
            cv = v[k, k] - v[k, o] ** 2 / v[o, o]
            tp[:, t, k] = _draw_latent(cm, cv, obs[:, t, k] if truncate else None, up[:, t, k], rng)
    ws.unpair(tp, theta)
    return theta


def _draw_latent(mean, var, observed, positive, rng):
    out = np.empty_like(mean)
    if observed is None:
        observed = np.zeros(mean.shape, dtype=bool)
    if np.any(observed):
        out[observed] = truncated_normal_sample(mean[observed], var, positive[observed], rng)
    free = ~observed
    if np.any(free):
        out[free] = mean[free] + math.sqrt(var) * rng.standard_normal(int(free.sum()))
    return out


def update_rho_gg(state: ChainState, ws: Workspace, priors: PriorSpec, rng, halfwidth: float,
                  proposal=None):
    """Uniform random-walk Metropolis step for the latent residual correlation.

    Returns ``(rho, accepted)``.
    """
    params = state.params
    rho = float(params.rho_gg)
    prop = rho + rng.uniform(-halfwidth, halfwidth) if proposal is None else float(proposal)
    phi = params.ar.gg
    gamma_prop = derived_gamma_gg(phi, prop)
    log_r = -np.inf
    if gamma_prop is not None:
        paths = ws.pairs(ws.residuals(params, state.z))
        log_r = (ar_path_loglik(paths, phi, gamma_prop, correlation_matrix(prop))
                 - ar_path_loglik(paths, phi, params.innov.gg, correlation_matrix(rho))
                 - 0.5 * ((prop - priors.M_rho) ** 2 - (rho - priors.M_rho) ** 2) / priors.V_rho)
    if _mh(log_r, rng):
        return prop, True
    return rho, False


def initial_probit_state(ws: Workspace, rng) -> ChainState:
    """Sign-consistent half-normal latent start, least-squares ``beta``, ``rho = 0``."""
    A, T = ws.A, ws.T
    obs = ws.observed
    theta = np.zeros((A, A, T))
    up = ws.y_filled == 1.0
    if np.any(obs):
        theta[obs] = truncated_normal_sample(np.zeros(int(obs.sum())), 1.0, up[obs], rng)
    miss = ws.missing
    if np.any(miss):
        theta[miss] = rng.standard_normal(int(miss.sum()))
    params = _initial_params(ws, theta, "binary")
    params = replace(params, rho_gg=0.0,
                     innov=InnovationCov(params.innov.sr, derived_gamma_gg(params.ar.gg, 0.0)))
    return ChainState(params, theta)


def probit_scan(state: ChainState, ws: Workspace, priors: PriorSpec, config: SamplerConfig,
                rng) -> ChainState:
    """update_theta, steps 1-5 on ``theta``, then the ``rho_gg`` step."""
    flags = {}
    state.z = update_theta(state, ws, rng)
    p = state.params
    state.params = p = replace(p, beta=update_beta(state, ws, priors, rng))
    state.params = p = replace(p, sr_effects=update_sr(state, ws, priors, rng))
    phi_sr, flags["phi_sr"] = update_phi_sr(state, ws, priors, config, rng)
    state.params = p = replace(p, ar=ARCoefficients(phi_sr, p.ar.gg))
    rho = p.rho_gg
    phi_gg, flags["phi_gg"] = update_phi_gg(state, ws, priors, config, rng,
                                            gamma_of=lambda phi: derived_gamma_gg(phi, rho))
    state.params = p = replace(p, ar=ARCoefficients(p.ar.sr, phi_gg),
                               innov=InnovationCov(p.innov.sr, derived_gamma_gg(phi_gg, rho)))
    gamma_sr, flags["gamma_sr"] = update_gamma_sr(state, ws, priors, config, rng)
    state.params = p = replace(p, innov=InnovationCov(gamma_sr, p.innov.gg))
    if ws.structure.gamma_gg_mode == "exchangeable":
        rho, flags["rho_gg"] = update_rho_gg(state, ws, priors, rng, config.rho_halfwidth)
        state.params = p = replace(p, rho_gg=rho,
                                   innov=InnovationCov(p.innov.sr, derived_gamma_gg(p.ar.gg, rho)))
    state.flags = flags
    return state


def run_chain_probit(panel: DyadPanel, priors: PriorSpec, config: SamplerConfig, init=None,
                     on_draw=None):
    """Run the probit sampler and return a :class:`PosteriorChain`.

    With the scalar residual structure (submodels M4/M5) ``rho_gg`` stays at 0.
    """
    if panel.family != "binary":
        raise ConfigInvalid("run_chain_probit needs a binary panel")
    ws = Workspace(panel, config.structure, config.pooled_beta)
    rng = rng_stream(config.seed, config.stream)
    if init is None:
        state = initial_probit_state(ws, rng)
    elif isinstance(init, ChainState):
        state = ChainState(init.params, np.array(init.z, dtype=float))
    else:
        state = _state_from_params(ws, init, rng)
    return _drive(ws, priors, config, state, probit_scan, rng, on_draw)


def _state_from_params(ws: Workspace, params: ModelParameters, rng) -> ChainState:
    if params.theta is not None:
        return ChainState(params, np.array(params.theta, dtype=float))
    start = initial_probit_state(ws, rng)
    rho = 0.0 if params.rho_gg is None else params.rho_gg
    gamma = derived_gamma_gg(params.ar.gg, rho)
    params = replace(params, rho_gg=rho, innov=InnovationCov(params.innov.sr, gamma))
    return ChainState(params, start.z)
