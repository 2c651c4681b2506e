"""Metropolis-within-Gibbs sampler for the Gaussian family.

One scan runs, in order:

1. ``beta`` from its normal full conditional (Gibbs);
2. each actor's sender/receiver path ``sr_i`` (Gibbs, actor by actor);
3. ``Phi_sr`` (Metropolis-Hastings);
4. ``Phi_gg`` (Metropolis-Hastings);
5. ``Gamma_sr`` (Metropolis-Hastings, inverse-Wishart proposal);
6. ``Gamma_gg`` through the sum/difference variances (Metropolis-Hastings);
7. missing responses (Gibbs, exact bivariate conditionals).

Steps 3-6 pick, independently each time, either the semi-conjugate proposal
(probability ``gibbs_vs_randomwalk_probability``) or a random walk around the
current value.  Both kernels are reversible with respect to the posterior, so
the mixture is too.

Proposal sums over lagged terms run over ``t = 2..T``; when a coefficient
matrix is fixed at zero (the static submodels) the ``t = 1`` terms are
included as well, which makes the proposal the exact full conditional.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import linalg

from .errors import ConfigInvalid, LSRMError, NotPositiveDefinite, SamplerFailure
from .model import (
    ARCoefficients,
    DyadPanel,
    InnovationCov,
    ModelParameters,
    dyad_index,
    gg_matrix,
    pair_stack,
    stationary_blocks,
    wong_inverse,
    wong_transform,
)
from .numerics import (
    cholesky,
    inverse_gamma_logpdf,
    inverse_gamma_sample,
    inverse_wishart_logpdf,
    inverse_wishart_sample,
    mvn_logpdf,
    mvn_sample_precision,
    rng_stream,
    solve_discrete_lyapunov,
    spd_inverse,
    spectral_radius,
)
from .priors import PriorSpec, gamma_sr_log_prior

ACCEPTED, REJECTED, GIBBS = "accepted", "rejected", "gibbs-exact"
MH_STEPS = ("phi_sr", "phi_gg", "gamma_sr", "gamma_gg", "rho_gg")


@dataclass(frozen=True)
class ModelStructure:
    """Which parts of the full model are switched on.

    sr_mode
        ``ar`` (AR(1) sender/receiver paths), ``iid`` (independent over time),
        ``constant`` (one effect per actor, constant over time) or ``none``.
    phi_gg_mode
        ``full`` (``phi_g`` and ``phi_gg``), ``diagonal`` (``phi_gg = 0``) or ``zero``.
    gamma_gg_mode
        ``exchangeable`` (``gamma2_g`` and ``lambda_gg``) or ``scalar`` (``lambda_gg = 0``).
    """

    sr_mode: str = "ar"
    phi_gg_mode: str = "full"
    gamma_gg_mode: str = "exchangeable"
    intercept_only: bool = False

    def __post_init__(self):
        if self.sr_mode not in ("ar", "iid", "constant", "none"):
            raise ConfigInvalid(f"unknown sr_mode {self.sr_mode!r}")
        if self.phi_gg_mode not in ("full", "diagonal", "zero"):
            raise ConfigInvalid(f"unknown phi_gg_mode {self.phi_gg_mode!r}")
        if self.gamma_gg_mode not in ("exchangeable", "scalar"):
            raise ConfigInvalid(f"unknown gamma_gg_mode {self.gamma_gg_mode!r}")


SUBMODELS = {
    "M1": ModelStructure(),
    "M2": ModelStructure(intercept_only=True),
    "M3": ModelStructure(sr_mode="constant", phi_gg_mode="zero"),
    "M3-iid": ModelStructure(sr_mode="iid", phi_gg_mode="zero"),
    "M4": ModelStructure(sr_mode="none", phi_gg_mode="diagonal", gamma_gg_mode="scalar"),
    "M5": ModelStructure(sr_mode="none", phi_gg_mode="zero", gamma_gg_mode="scalar"),
}


@dataclass(frozen=True)
class SamplerConfig:
    total_scans: int = 5000
    burn_in: int = 1000
    thin: int = 1
    gibbs_vs_randomwalk_probability: float = 0.5
    rw_step_phi: float = 0.05
    rw_step_gamma: float = 0.1
    seed: int = 0
    stream: int = 0
    rho_halfwidth: float = 0.1
    pooled_beta: bool = False
    structure: ModelStructure = field(default_factory=ModelStructure)
    store_theta: bool = False

    def __post_init__(self):
        if self.total_scans < 0 or self.burn_in < 0:
            raise ConfigInvalid("scan counts must be non-negative")
        if self.burn_in > self.total_scans:
            raise ConfigInvalid("burn_in must not exceed total_scans")
        if self.thin < 1:
            raise ConfigInvalid("thin must be >= 1")
        if not 0.0 <= self.gibbs_vs_randomwalk_probability <= 1.0:
            raise ConfigInvalid("gibbs_vs_randomwalk_probability must lie in [0, 1]")
        if self.rw_step_phi <= 0 or self.rw_step_gamma <= 0 or self.rho_halfwidth < 0:
            raise ConfigInvalid("random-walk step sizes must be positive")

    @property
    def n_saved(self) -> int:
        return (self.total_scans - self.burn_in) // self.thin

    def as_dict(self) -> dict:
        d = asdict(self)
        d["structure"] = asdict(self.structure)
        return d


class Workspace:
    """Arrays derived once from the panel and reused every scan."""

    def __init__(self, panel: DyadPanel, structure: ModelStructure | None = None,
                 pooled_beta: bool = False):
        self.panel = panel
        self.structure = structure or ModelStructure()
        self.pooled_beta = pooled_beta
        self.family = panel.family
        self.A, self.T = panel.A, panel.T
        if self.structure.intercept_only:
            self.x = np.ones(panel.y.shape + (1,))
            self.covariate_names = ("intercept",)
        else:
            self.x = np.asarray(panel.x)
            self.covariate_names = panel.covariate_names
        self.p = self.x.shape[3]
        self.q = self.p if pooled_beta else self.T * self.p
        self.I, self.J = dyad_index(self.A)
        self.D = len(self.I)
        T, p = self.T, self.p
        design = np.zeros((self.D, 2 * T, self.q))
        for t in range(T):
            cols = slice(0, p) if pooled_beta else slice(t * p, (t + 1) * p)
            design[:, 2 * t, cols] = self.x[self.I, self.J, t]
            design[:, 2 * t + 1, cols] = self.x[self.J, self.I, t]
        self.design = design
        self.observed = np.asarray(panel.observed)
        self.offdiag = ~np.eye(self.A, dtype=bool)
        self.missing = self.offdiag[:, :, None] & ~self.observed
        self.missing_pairs = pair_stack(self.missing, self.I, self.J)
        self.missing_dyads = np.flatnonzero(self.missing_pairs.any(axis=(1, 2)))
        self.missing_cells = np.argwhere(self.missing)
        self.y_filled = np.where(self.observed, np.nan_to_num(panel.y), 0.0)

    def beta_matrix(self, bfree) -> np.ndarray:
        bfree = np.asarray(bfree, dtype=float)
        if self.pooled_beta:
            return np.tile(bfree, (self.T, 1))
        return bfree.reshape(self.T, self.p)

    def beta_free(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        return beta[0].copy() if self.pooled_beta else beta.reshape(-1).copy()

    def eta(self, beta) -> np.ndarray:
        return np.einsum("ijtk,tk->ijt", self.x, beta)

    def sr_mean(self, sr) -> np.ndarray:
        """``s[i, t] + r[j, t]`` for every directed pair."""
        return sr[:, None, :, 0] + sr[None, :, :, 1]

    def residuals(self, params: ModelParameters, z) -> np.ndarray:
        g = z - self.eta(params.beta) - self.sr_mean(params.sr_effects)
        g[~self.offdiag] = 0.0
        return g

    def pairs(self, arr) -> np.ndarray:
        return pair_stack(arr, self.I, self.J)

    def unpair(self, pairs, out) -> None:
        out[self.I, self.J] = pairs[..., 0]
        out[self.J, self.I] = pairs[..., 1]


@dataclass
class ChainState:
    """Mutable sampler state: parameters plus the working response.

    ``z`` holds the responses with missing entries imputed (Gaussian) or the
    latent ``theta`` (probit).
    """

    params: ModelParameters
    z: np.ndarray
    flags: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# likelihood pieces


def ar_path_loglik(paths, phi, gamma, sigma0=None) -> float:
    """Log density of VAR(1) paths ``(N, T, 2)`` started in stationarity.

    Uses the Markov factorisation (initial block plus transitions), which equals
    the dense block-Toeplitz normal density.
    """
    paths = np.asarray(paths, dtype=float)
    if paths.shape[0] == 0:
        return 0.0
    if sigma0 is None:
        sigma0 = solve_discrete_lyapunov(phi, gamma)
    ll = float(np.sum(mvn_logpdf(paths[:, 0], np.zeros(2), sigma0)))
    if paths.shape[1] > 1:
        innov = paths[:, 1:] - paths[:, :-1] @ np.asarray(phi).T
        ll += float(np.sum(mvn_logpdf(innov.reshape(-1, 2), np.zeros(2), gamma)))
    return ll


def dense_path_loglik(paths, phi, gamma) -> float:
    paths = np.asarray(paths, dtype=float)
    n, T, _ = paths.shape
    cov = stationary_blocks(phi, gamma, T).assembled
    return float(np.sum(mvn_logpdf(paths.reshape(n, 2 * T), np.zeros(2 * T), cov)))


def gg_covariance(params: ModelParameters, T: int) -> np.ndarray:
    return stationary_blocks(params.ar.gg, params.innov.gg, T).assembled


def _sr_paths(params: ModelParameters, structure: ModelStructure):
    """Paths and coefficient matrix that define the sender/receiver density."""
    sr = params.sr_effects
    if structure.sr_mode == "constant":
        return sr[:, :1], np.zeros((2, 2)), True
    if structure.sr_mode == "iid":
        return sr, np.zeros((2, 2)), True
    return sr, params.ar.sr, False


def _mh(log_ratio: float, rng) -> bool:
    u = rng.random()
    return bool(log_ratio > -np.inf and u < math.exp(min(log_ratio, 0.0)))


def _use_gibbs_proposal(config: SamplerConfig, rng) -> bool:
    return bool(rng.random() < config.gibbs_vs_randomwalk_probability)


# ---------------------------------------------------------------------------
# step 1


def beta_conditional(state: ChainState, ws: Workspace, priors: PriorSpec):
    """Precision and linear term of the normal full conditional of the free
    regression coefficients."""
    mb, vb = priors.beta_prior(ws.q)
    vb_inv = spd_inverse(vb)
    prec = vb_inv.copy()
    lin = vb_inv @ mb
    if ws.D:
        q_gg = spd_inverse(gg_covariance(state.params, ws.T))
        resid = state.z - ws.sr_mean(state.params.sr_effects)
        b = ws.pairs(resid).reshape(ws.D, 2 * ws.T)
        # (q, D * 2T) block of X' Q, then one matrix product for all dyads
        xq = np.matmul(ws.design.transpose(0, 2, 1), q_gg).transpose(1, 0, 2).reshape(ws.q, -1)
        prec = prec + xq @ ws.design.reshape(-1, ws.q)
        lin = lin + xq @ b.reshape(-1)
    return 0.5 * (prec + prec.T), lin


def update_beta(state: ChainState, ws: Workspace, priors: PriorSpec, rng) -> np.ndarray:
    """Exact draw of the stacked regression coefficients; returns ``(T, p)``."""
    prec, lin = beta_conditional(state, ws, priors)
    draw, _, _ = mvn_sample_precision(prec, lin, rng)
    return ws.beta_matrix(draw)


# ---------------------------------------------------------------------------
# step 2


def _sr_system(params: ModelParameters, ws: Workspace):
    """Shared pieces of every actor's conditional: precision, the map from the
    per-time residual sums to the linear term, and the summed residuals."""
    A, T = ws.A, ws.T
    q_gg = spd_inverse(gg_covariance(params, T))
    if ws.structure.sr_mode == "constant":
        load = np.kron(np.ones((T, 1)), np.eye(2))
        prec = (A - 1) * load.T @ q_gg @ load + spd_inverse(params.innov.sr)
        proj = load.T @ q_gg
    else:
        phi = params.ar.sr if ws.structure.sr_mode == "ar" else np.zeros((2, 2))
        prior_prec = spd_inverse(stationary_blocks(phi, params.innov.sr, T).assembled)
        prec = (A - 1) * q_gg + prior_prec
        proj = q_gg
    return 0.5 * (prec + prec.T), proj


def _actor_sums(state: ChainState, ws: Workspace):
    e = state.z - ws.eta(state.params.beta)
    e[~ws.offdiag] = 0.0
    return e.sum(axis=1), e.sum(axis=0)  # sum_j e[i, j, t], sum_j e[j, i, t]


def sr_actor_moments(state: ChainState, ws: Workspace, i: int):
    """Mean and covariance of actor ``i``'s stacked ``(s_i1, r_i1, s_i2, ...)``
    given everything else (a single time block in the constant mode)."""
    sr = state.params.sr_effects
    prec, proj = _sr_system(state.params, ws)
    row, col = _actor_sums(state, ws)
    b = np.empty((ws.T, 2))
    b[:, 0] = row[i] - (sr[:, :, 1].sum(axis=0) - sr[i, :, 1])
    b[:, 1] = col[i] - (sr[:, :, 0].sum(axis=0) - sr[i, :, 0])
    cov = spd_inverse(prec)
    return cov @ (proj @ b.reshape(-1)), cov


def update_sr(state: ChainState, ws: Workspace, priors: PriorSpec, rng) -> np.ndarray:
    """Draw every actor's sender/receiver path in turn; returns ``(A, T, 2)``."""
    params = state.params
    sr = np.array(params.sr_effects, dtype=float)
    mode = ws.structure.sr_mode
    if mode == "none":
        return np.zeros_like(sr)
    T = ws.T
    prec, proj = _sr_system(params, ws)
    row, col = _actor_sums(state, ws)
    chol = cholesky(prec)
    tot_s = sr[:, :, 0].sum(axis=0)
    tot_r = sr[:, :, 1].sum(axis=0)
    for i in range(ws.A):
        b = np.empty((T, 2))
        b[:, 0] = row[i] - (tot_r - sr[i, :, 1])
        b[:, 1] = col[i] - (tot_s - sr[i, :, 0])
        mean = linalg.cho_solve((chol, True), proj @ b.reshape(-1))
        draw = mean + linalg.solve_triangular(chol.T, rng.standard_normal(len(mean)), lower=False)
        new = np.tile(draw, (T, 1)) if mode == "constant" else draw.reshape(T, 2)
        tot_s += new[:, 0] - sr[i, :, 0]
        tot_r += new[:, 1] - sr[i, :, 1]
        sr[i] = new
    return sr


# ---------------------------------------------------------------------------
# step 3


def phi_sr_proposal_moments(paths, gamma, priors: PriorSpec):
    """Precision and linear term of the semi-conjugate normal proposal for
    ``vec(Phi_sr)`` (row-major: ``phi_s, phi_sr, phi_rs, phi_r``)."""
    m0, v0 = priors.phi_sr_prior
    v0_inv = spd_inverse(v0)
    g_inv = spd_inverse(gamma)
    prec = v0_inv.copy()
    lin = v0_inv @ m0
    if paths.shape[1] > 1:
        lag = paths[:, :-1].reshape(-1, 2)
        cur = paths[:, 1:].reshape(-1, 2)
        prec = prec + np.kron(g_inv, lag.T @ lag)
        lin = lin + (g_inv @ (cur.T @ lag)).reshape(-1)
    return 0.5 * (prec + prec.T), lin


def _normal_logq(v, prec, lin) -> float:
    """Log density (up to a shared constant) of N(prec^-1 lin, prec^-1) at v."""
    mean = np.linalg.solve(prec, lin)
    d = v - mean
    return -0.5 * float(d @ prec @ d)


def update_phi_sr(state: ChainState, ws: Workspace, priors: PriorSpec, config: SamplerConfig,
                  rng, proposal=None, use_gibbs=None):
    """Returns ``(Phi_sr, accepted)``."""
    params = state.params
    current = params.ar.sr
    if ws.structure.sr_mode != "ar":
        return current, True
    paths = params.sr_effects
    gamma = params.innov.sr
    if use_gibbs is None:
        use_gibbs = _use_gibbs_proposal(config, rng)
    cur_vec = current.reshape(-1)
    log_q = 0.0
    if use_gibbs:
        prec, lin = phi_sr_proposal_moments(paths, gamma, priors)
        if proposal is None:
            prop_vec, _, _ = mvn_sample_precision(prec, lin, rng)
        else:
            prop_vec = np.asarray(proposal, dtype=float).reshape(-1)
        log_q = _normal_logq(cur_vec, prec, lin) - _normal_logq(prop_vec, prec, lin)
    elif proposal is None:
        prop_vec = cur_vec + config.rw_step_phi * rng.standard_normal(4)
    else:
        prop_vec = np.asarray(proposal, dtype=float).reshape(-1)
    prop = prop_vec.reshape(2, 2)
    log_r = -np.inf
    if spectral_radius(prop) < 1.0:
        m0, v0 = priors.phi_sr_prior
        log_r = (ar_path_loglik(paths, prop, gamma) - ar_path_loglik(paths, current, gamma)
                 + mvn_logpdf(prop_vec, m0, v0) - mvn_logpdf(cur_vec, m0, v0) + log_q)
    if _mh(log_r, rng):
        return prop, True
    return current, False


# ---------------------------------------------------------------------------
# step 4


def _gg_design(paths, diagonal: bool):
    """Regressors Z_{t-1} and responses g_t for the dyadic AR coefficients."""
    lag = paths[:, :-1].reshape(-1, 2)
    cur = paths[:, 1:].reshape(-1, 2)
    if diagonal:
        z = lag[:, :, None]
    else:
        z = np.stack([lag, lag[:, ::-1]], axis=-1)
    return z, cur


def phi_gg_proposal_moments(paths, gamma, priors: PriorSpec, diagonal: bool = False):
    m0, v0 = priors.phi_gg_prior
    if diagonal:
        m0, v0 = m0[:1], v0[:1, :1]
    v0_inv = spd_inverse(v0)
    prec = v0_inv.copy()
    lin = v0_inv @ m0
    if paths.shape[1] > 1 and paths.shape[0]:
        g_inv = spd_inverse(gamma)
        z, cur = _gg_design(paths, diagonal)
        prec = prec + np.einsum("nai,ab,nbj->ij", z, g_inv, z)
        lin = lin + np.einsum("nai,ab,nb->i", z, g_inv, cur)
    return 0.5 * (prec + prec.T), lin


def _phi_gg_vec(params, diagonal):
    v = np.array([params.ar.phi_g, params.ar.phi_gg])
    return v[:1] if diagonal else v


def _gg_from_vec(v):
    return gg_matrix(v[0], v[1] if len(v) > 1 else 0.0)


def update_phi_gg(state: ChainState, ws: Workspace, priors: PriorSpec, config: SamplerConfig,
                  rng, gamma_of=None, proposal=None, use_gibbs=None, extra_valid=None):
    """Returns ``(Phi_gg, accepted)``.

    ``gamma_of`` maps a candidate ``Phi_gg`` to its innovation covariance (or
    None when invalid); the Gaussian family keeps the current ``Gamma_gg``,
    the probit family derives it from ``rho_gg``.
    """
    params = state.params
    current = params.ar.gg
    mode = ws.structure.phi_gg_mode
    if mode == "zero":
        return current, True
    diagonal = mode == "diagonal"
    if gamma_of is None:
        fixed = params.innov.gg
        gamma_of = lambda phi: fixed  # noqa: E731
    paths = ws.pairs(ws.residuals(params, state.z))
    gamma_cur = gamma_of(current)
    if use_gibbs is None:
        use_gibbs = _use_gibbs_proposal(config, rng)
    cur_vec = _phi_gg_vec(params, diagonal)
    k = len(cur_vec)
    if use_gibbs:
        prec, lin = phi_gg_proposal_moments(paths, gamma_cur, priors, diagonal)
        if proposal is None:
            prop_vec, _, _ = mvn_sample_precision(prec, lin, rng)
        else:
            prop_vec = np.asarray(proposal, dtype=float).reshape(-1)[:k]
    elif proposal is None:
        prop_vec = cur_vec + config.rw_step_phi * rng.standard_normal(k)
    else:
        prop_vec = np.asarray(proposal, dtype=float).reshape(-1)[:k]
    prop = _gg_from_vec(prop_vec)
    gamma_prop = gamma_of(prop) if spectral_radius(prop) < 1.0 else None
    log_r = -np.inf
    if gamma_prop is not None and (extra_valid is None or extra_valid(prop)):
        m0, v0 = priors.phi_gg_prior
        if diagonal:
            m0, v0 = m0[:1], v0[:1, :1]
        log_r = (ar_path_loglik(paths, prop, gamma_prop) - ar_path_loglik(paths, current, gamma_cur)
                 + mvn_logpdf(prop_vec, m0, v0) - mvn_logpdf(cur_vec, m0, v0))
        if use_gibbs:
            # The reverse proposal is built from the proposed state's Gamma_gg.
            prec_rev, lin_rev = phi_gg_proposal_moments(paths, gamma_prop, priors, diagonal)
            log_r += (_normal_logq(cur_vec, prec_rev, lin_rev) + 0.5 * _logdet(prec_rev)
                      - _normal_logq(prop_vec, prec, lin) - 0.5 * _logdet(prec))
    if _mh(log_r, rng):
        return prop, True
    return current, False


def _logdet(m) -> float:
    return float(np.linalg.slogdet(m)[1])


# ---------------------------------------------------------------------------
# step 5


def _innovations(paths, phi, include_first: bool):
    if include_first:
        return paths.reshape(-1, 2)
    if paths.shape[1] < 2:
        return np.zeros((0, 2))
    return (paths[:, 1:] - paths[:, :-1] @ np.asarray(phi).T).reshape(-1, 2)


def gamma_sr_proposal(paths, phi, priors: PriorSpec, include_first: bool = False):
    """Degrees of freedom and IW scale of the inverse-Wishart proposal."""
    e = _innovations(paths, phi, include_first)
    ss = e.T @ e + priors.S_sr_matrix
    return e.shape[0] + priors.v_sr, spd_inverse(ss)


def _gamma_sr_to_u(g):
    a, c, b = g[0, 0], g[1, 1], g[0, 1]
    return np.array([math.log(a), math.log(c), math.atanh(b / math.sqrt(a * c))])


def _u_to_gamma_sr(u):
    a, c = math.exp(u[0]), math.exp(u[1])
    b = math.tanh(u[2]) * math.sqrt(a * c)
    return np.array([[a, b], [b, c]])


def _gamma_sr_log_jacobian(g) -> float:
    """log |d Gamma / d u| for u = (log a, log c, atanh(rho))."""
    a, c, b = g[0, 0], g[1, 1], g[0, 1]
    rho2 = b * b / (a * c)
    return 1.5 * (math.log(a) + math.log(c)) + math.log(1.0 - rho2)


def update_gamma_sr(state: ChainState, ws: Workspace, priors: PriorSpec, config: SamplerConfig,
                    rng, proposal=None, use_gibbs=None):
    """Returns ``(Gamma_sr, accepted)``."""
    params = state.params
    current = params.innov.sr
    if ws.structure.sr_mode == "none":
        return current, True
    paths, phi, include_first = _sr_paths(params, ws.structure)
    if use_gibbs is None:
        use_gibbs = _use_gibbs_proposal(config, rng)
    log_q = 0.0
    if use_gibbs:
        df, scale = gamma_sr_proposal(paths, phi, priors, include_first)
        prop = inverse_wishart_sample(df, scale, rng) if proposal is None else np.asarray(proposal)
        log_q = inverse_wishart_logpdf(current, df, scale) - inverse_wishart_logpdf(prop, df, scale)
    else:
        if proposal is None:
            u = _gamma_sr_to_u(current) + config.rw_step_gamma * rng.standard_normal(3)
            prop = _u_to_gamma_sr(u)
        else:
            prop = np.asarray(proposal, dtype=float)
        # random walk in (log, log, atanh) coordinates
        log_q = _gamma_sr_log_jacobian(prop) - _gamma_sr_log_jacobian(current)
    prop = 0.5 * (prop + prop.T)
    log_r = -np.inf
    try:
        cholesky(prop)
        log_r = (ar_path_loglik(paths, phi, prop) - ar_path_loglik(paths, phi, current)
                 + gamma_sr_log_prior(prop, priors) - gamma_sr_log_prior(current, priors) + log_q)
    except (NotPositiveDefinite, ValueError):
        pass
    if _mh(log_r, rng):
        return prop, True
    return current, False


# ---------------------------------------------------------------------------
# step 6


def gamma_gg_proposal(paths, phi, priors: PriorSpec, include_first: bool = False,
                      scalar: bool = False):
    """Inverse-gamma proposal parameters.

    Exchangeable mode returns ``((shape_a, rate_a), (shape_b, rate_b))`` for the
    sum/difference variances; scalar mode returns ``(shape, rate)`` for the
    single innovation variance.
    """
    e = _innovations(paths, phi, include_first)
    if scalar:
        return (e.size / 2.0 + priors.alpha_a, float(np.sum(e * e)) / 2.0 + priors.delta_a)
    a = e[:, 0] + e[:, 1]
    b = e[:, 0] - e[:, 1]
    n = e.shape[0]
    return ((n / 2.0 + priors.alpha_a, float(a @ a) / 2.0 + priors.delta_a),
            (n / 2.0 + priors.alpha_b, float(b @ b) / 2.0 + priors.delta_b))


def update_gamma_gg(state: ChainState, ws: Workspace, priors: PriorSpec, config: SamplerConfig,
                    rng, proposal=None, use_gibbs=None):
    """Returns ``(Gamma_gg, accepted)``.

    ``proposal`` (for tests) is ``(sigma2_a, sigma2_b)`` in exchangeable mode
    and the scalar variance otherwise.
    """
    params = state.params
    current = params.innov.gg
    scalar = ws.structure.gamma_gg_mode == "scalar"
    include_first = ws.structure.phi_gg_mode == "zero"
    phi = params.ar.gg
    paths = ws.pairs(ws.residuals(params, state.z))
    if use_gibbs is None:
        use_gibbs = _use_gibbs_proposal(config, rng)
    if scalar:
        cur = np.array([current[0, 0]])
    else:
        cur = np.array(wong_inverse(params.innov.gamma2_g, params.innov.lambda_gg))
    log_q = 0.0
    if use_gibbs:
        pars = gamma_gg_proposal(paths, phi, priors, include_first, scalar)
        pars = [pars] if scalar else list(pars)
        if proposal is None:
            prop = np.array([inverse_gamma_sample(s, r, rng) for s, r in pars])
        else:
            prop = np.atleast_1d(np.asarray(proposal, dtype=float))
        for k, (s, r) in enumerate(pars):
            log_q += inverse_gamma_logpdf(cur[k], s, r) - inverse_gamma_logpdf(prop[k], s, r)
    else:
        if proposal is None:
            prop = cur * np.exp(config.rw_step_gamma * rng.standard_normal(len(cur)))
        else:
            prop = np.atleast_1d(np.asarray(proposal, dtype=float))
        log_q = float(np.sum(np.log(prop)) - np.sum(np.log(cur)))
    if scalar:
        gamma_prop = prop[0] * np.eye(2)
        prior_terms = [(priors.alpha_a, priors.delta_a)]
    else:
        g2, lam = wong_transform(prop[0], prop[1])
        gamma_prop = gg_matrix(g2, lam * g2)
        prior_terms = [(priors.alpha_a, priors.delta_a), (priors.alpha_b, priors.delta_b)]
    log_r = (ar_path_loglik(paths, phi, gamma_prop) - ar_path_loglik(paths, phi, current) + log_q)
    for k, (s, r) in enumerate(prior_terms):
        log_r += inverse_gamma_logpdf(prop[k], s, r) - inverse_gamma_logpdf(cur[k], s, r)
    if _mh(log_r, rng):
        return gamma_prop, True
    return current, False


# ---------------------------------------------------------------------------
# step 7


def conditional_pair_moments(t: int, T: int, mu_t, g_prev, g_next, phi, gamma, sigma0):
    """Mean ``(n, 2)`` and covariance ``(2, 2)`` of a dyad's pair at time ``t``
    (0-based) given its residuals at the neighbouring times.

    ``mu_t`` is the conditional mean part (fixed plus sender/receiver effects);
    ``g_prev``/``g_next`` are residuals at ``t-1``/``t+1`` (ignored at the ends).
    """
    mu_t = np.atleast_2d(mu_t)
    phi = np.asarray(phi, dtype=float)
    if T == 1:
        return mu_t.copy(), np.array(sigma0, dtype=float)
    g_inv = spd_inverse(gamma)
    if t == T - 1:
        d = mu_t + np.atleast_2d(g_prev) @ phi.T
        return d, np.array(gamma, dtype=float)
    c = np.atleast_2d(g_next) + mu_t @ phi.T
    pg = phi.T @ g_inv
    if t == 0:
        s_inv = spd_inverse(sigma0)
        v = spd_inverse(pg @ phi + s_inv)
        m = (c @ pg.T + mu_t @ s_inv) @ v
    else:
        d = mu_t + np.atleast_2d(g_prev) @ phi.T
        v = spd_inverse(pg @ phi + g_inv)
        m = (c @ pg.T + d @ g_inv) @ v
    return m, v


def _pair_means(ws: Workspace, params: ModelParameters):
    mu = ws.eta(params.beta) + ws.sr_mean(params.sr_effects)
    return ws.pairs(mu)


def update_missing(state: ChainState, ws: Workspace, rng) -> np.ndarray:
    """Gibbs draw of every missing response; returns the completed ``z``."""
    z = np.array(state.z, dtype=float)
    if ws.missing_dyads.size == 0:
        return z
    params = state.params
    T = ws.T
    rows = ws.missing_dyads
    mu = _pair_means(ws, params)[rows]
    zp = ws.pairs(z)[rows]
    miss = ws.missing_pairs[rows]
    phi, gamma = params.ar.gg, params.innov.gg
    sigma0 = solve_discrete_lyapunov(phi, gamma)
    for t in range(T):
        sel = np.flatnonzero(miss[:, t].any(axis=1))
        if sel.size == 0:
            continue
        g_prev = zp[sel, t - 1] - mu[sel, t - 1] if t > 0 else None
        g_next = zp[sel, t + 1] - mu[sel, t + 1] if t < T - 1 else None
        m, v = conditional_pair_moments(t, T, mu[sel, t], g_prev, g_next, phi, gamma, sigma0)
        zp[sel, t] = draw_pair_given_partner(m, v, zp[sel, t], miss[sel, t], rng)
    full_pairs = ws.pairs(z)
    full_pairs[rows] = zp
    ws.unpair(full_pairs, z)
    return z


def draw_pair_given_partner(m, v, current, missing, rng):
    """Draw the missing coordinates of bivariate normals ``N(m, v)``, conditioning
    on the observed partner where only one coordinate is missing."""
    out = np.array(current, dtype=float)
    both = missing[:, 0] & missing[:, 1]
    only0 = missing[:, 0] & ~missing[:, 1]
    only1 = missing[:, 1] & ~missing[:, 0]
    if np.any(both):
        chol = cholesky(v)
        out[both] = m[both] + rng.standard_normal((int(both.sum()), 2)) @ chol.T
    if np.any(only0):
        cm = m[only0, 0] + v[0, 1] / v[1, 1] * (out[only0, 1] - m[only0, 1])
        cv = v[0, 0] - v[0, 1] ** 2 / v[1, 1]
        out[only0, 0] = cm + math.sqrt(cv) * rng.standard_normal(int(only0.sum()))
    if np.any(only1):
        cm = m[only1, 1] + v[0, 1] / v[0, 0] * (out[only1, 0] - m[only1, 0])
        cv = v[1, 1] - v[0, 1] ** 2 / v[0, 0]
        out[only1, 1] = cm + math.sqrt(cv) * rng.standard_normal(int(only1.sum()))
    return out


# ---------------------------------------------------------------------------
# initialisation and the chain driver


def least_squares_beta(ws: Workspace, z, observed=None):
    """Ordinary least squares on the directed observations, ignoring random effects."""
    if observed is None:
        observed = ws.observed
    obs = ws.pairs(observed).reshape(ws.D, 2 * ws.T)
    if ws.D == 0 or not obs.any():
        return np.zeros(ws.q), 1.0
    X = ws.design[obs]
    y = ws.pairs(z).reshape(ws.D, 2 * ws.T)[obs]
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(len(y) - np.linalg.matrix_rank(X), 1)
    return coef, max(float(resid @ resid) / dof, 1e-6)


def _initial_params(ws: Workspace, z, family: str) -> ModelParameters:
    coef, variance = least_squares_beta(ws, z)
    beta = ws.beta_matrix(coef)
    v = variance / 3.0
    if ws.structure.sr_mode == "none":
        v_g = variance
    else:
        v_g = v
    innov = InnovationCov(v * np.eye(2), v_g * np.eye(2))
    if family == "binary":
        innov = InnovationCov(v * np.eye(2), np.eye(2))
    params = ModelParameters(
        beta=beta,
        ar=ARCoefficients(np.zeros((2, 2)), np.zeros((2, 2))),
        innov=innov,
        sr_effects=np.zeros((ws.A, ws.T, 2)),
        rho_gg=0.0 if family == "binary" else None,
    )
    return params


def initial_state(ws: Workspace) -> ChainState:
    """Least-squares ``beta``, zero effects and AR coefficients, identity-scaled
    innovation covariances.  Missing responses start at the least-squares fit."""
    z = ws.y_filled.copy()
    params = _initial_params(ws, z, "gaussian")
    fill = ws.eta(params.beta)
    z = np.where(ws.missing, fill, z)
    z[~ws.offdiag] = 0.0
    return ChainState(params, z)


def gaussian_scan(state: ChainState, ws: Workspace, priors: PriorSpec, config: SamplerConfig,
                  rng) -> ChainState:
    """One full pass of steps 1-7 (mutates and returns ``state``)."""
    flags = {}
    p = state.params
    state.params = p = replace(p, beta=update_beta(state, ws, priors, rng))
    state.params = p = replace(p, sr_effects=update_sr(state, ws, priors, rng))
    phi_sr, flags["phi_sr"] = update_phi_sr(state, ws, priors, config, rng)
    state.params = p = replace(p, ar=ARCoefficients(phi_sr, p.ar.gg))
    phi_gg, flags["phi_gg"] = update_phi_gg(state, ws, priors, config, rng)
    state.params = p = replace(p, ar=ARCoefficients(p.ar.sr, phi_gg))
    gamma_sr, flags["gamma_sr"] = update_gamma_sr(state, ws, priors, config, rng)
    state.params = p = replace(p, innov=InnovationCov(gamma_sr, p.innov.gg))
    gamma_gg, flags["gamma_gg"] = update_gamma_gg(state, ws, priors, config, rng)
    state.params = p = replace(p, innov=InnovationCov(p.innov.sr, gamma_gg))
    state.z = update_missing(state, ws, rng)
    state.flags = flags
    return state


def _drive(ws, priors, config, state, scan_fn, rng, on_draw=None):
    from .posterior import ChainLayout, PosteriorChain

    layout = ChainLayout.from_workspace(ws, store_theta=config.store_theta)
    rows, scans = [], []
    accept_counts = {k: 0 for k in MH_STEPS}
    tried = {k: 0 for k in MH_STEPS}
    for scan in range(config.total_scans):
        try:
            state = scan_fn(state, ws, priors, config, rng)
        except LSRMError as exc:
            raise SamplerFailure(f"scan {scan}: {exc}", state=state, scan=scan) from exc
        for k, ok in state.flags.items():
            tried[k] += 1
            accept_counts[k] += int(ok)
        if scan >= config.burn_in and (scan - config.burn_in + 1) % config.thin == 0:
            row = layout.flatten(state.params, state.z, state.flags)
            rows.append(row)
            scans.append(scan + 1)
            if on_draw is not None:
                on_draw(scan + 1, row)
    rates = {k: accept_counts[k] / tried[k] for k in MH_STEPS if tried[k]}
    values = np.array(rows).reshape(len(rows), len(layout.names))
    meta = {
        "config": config.as_dict(),
        "seed": config.seed,
        "panel_fingerprint": panel_fingerprint(ws.panel),
        "acceptance_rates": rates,
    }
    return PosteriorChain(layout, values, np.array(scans, dtype=int), meta)


def panel_fingerprint(panel: DyadPanel) -> str:
    import hashlib

    h = hashlib.sha256()
    for arr in (np.nan_to_num(panel.y, nan=-1e300), panel.observed, panel.x):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update("|".join(panel.actor_labels).encode())
    h.update("|".join(panel.covariate_names).encode())
    return h.hexdigest()[:16]


def run_chain(panel: DyadPanel, priors: PriorSpec, config: SamplerConfig, init=None,
              on_draw=None):
    """Run the Gaussian-family sampler and return a :class:`PosteriorChain`.

    ``init`` may be a :class:`ChainState` (copied) or a ``ModelParameters``.
    ``on_draw(scan, row)`` is called for each saved draw, e.g. to stream
    records to disk.
    """
    if panel.family != "gaussian":
        raise ConfigInvalid("run_chain needs a gaussian panel; use run_chain_probit")
    ws = Workspace(panel, config.structure, config.pooled_beta)
    rng = rng_stream(config.seed, config.stream)
    state = _start_state(ws, init)
    return _drive(ws, priors, config, state, gaussian_scan, rng, on_draw)


def _start_state(ws, init):
    if init is None:
        return initial_state(ws)
    if isinstance(init, ChainState):
        return ChainState(init.params, np.array(init.z, dtype=float))
    z = ws.y_filled.copy()
    fill = ws.eta(init.beta) + ws.sr_mean(init.sr_effects)
    z = np.where(ws.missing, fill, z)
    z[~ws.offdiag] = 0.0
    return ChainState(init, z)
