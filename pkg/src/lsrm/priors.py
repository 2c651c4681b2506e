"""Prior hyperparameters and log-prior evaluation.

The stationarity and positive-definiteness indicators are applied as hard
support restrictions.  Their normalising constants are *not* included in
:func:`log_prior`: every Metropolis-Hastings ratio in the samplers compares
two states under the same restricted prior, so the constants cancel.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ConfigInvalid
from .model import ModelParameters, probit_innovation_from, wong_inverse
from .numerics import (
    inverse_gamma_logpdf,
    inverse_wishart_logpdf,
    is_positive_definite,
    mvn_logpdf,
    spd_inverse,
    spectral_radius,
)


@dataclass(frozen=True)
class PriorSpec:
    """Semi-conjugate prior hyperparameters.

    ``M_beta``/``V_beta`` may be scalars, broadcast to the stacked coefficient
    vector (a scalar ``V_beta`` means ``V_beta * I``).  ``Gamma_sr`` follows
    ``IW(v_sr, inv(S_sr))`` in the package convention (see :mod:`lsrm.numerics`),
    i.e. its density has the kernel ``exp(-tr(S_sr inv(Gamma_sr)) / 2)``.
    ``alpha_a``/``delta_a`` also serve as the prior for the single innovation
    variance of the submodels without reciprocity.
    """

    M_beta: object = 0.0
    V_beta: object = 100.0
    M_phi_sr: tuple = (0.0, 0.0, 0.0, 0.0)
    V_phi_sr: object = 100.0
    M_phi_gg: tuple = (0.0, 0.0)
    V_phi_gg: object = 100.0
    v_sr: float = 4.0
    S_sr: object = 1.0
    alpha_a: float = 1.0
    delta_a: float = 1.0
    alpha_b: float = 1.0
    delta_b: float = 1.0
    M_rho: float = 0.0
    V_rho: float = 100.0

    def __post_init__(self):
        for name in ("alpha_a", "delta_a", "alpha_b", "delta_b", "V_rho"):
            if not getattr(self, name) > 0:
                raise ConfigInvalid(f"prior {name} must be positive")
        if not self.v_sr > 1:
            raise ConfigInvalid("prior v_sr must exceed 1")
        for name, dim in (("V_phi_sr", 4), ("V_phi_gg", 2), ("S_sr", 2)):
            if not is_positive_definite(_as_cov(getattr(self, name), dim)):
                raise ConfigInvalid(f"prior {name} must be positive definite")
        if not np.all(np.asarray(self.V_beta, dtype=float) != 0):
            raise ConfigInvalid("prior V_beta must be positive definite")

    def beta_prior(self, q: int):
        m = np.broadcast_to(np.asarray(self.M_beta, dtype=float), (q,)).copy()
        return m, _as_cov(self.V_beta, q)

    @property
    def phi_sr_prior(self):
        return np.asarray(self.M_phi_sr, dtype=float), _as_cov(self.V_phi_sr, 4)

    @property
    def phi_gg_prior(self):
        return np.asarray(self.M_phi_gg, dtype=float), _as_cov(self.V_phi_gg, 2)

    @property
    def S_sr_matrix(self):
        return _as_cov(self.S_sr, 2)

    def updated(self, **changes) -> "PriorSpec":
        return replace(self, **changes)


def gamma_sr_log_prior(gamma_sr, spec: PriorSpec) -> float:
    """``IW(v_sr, inv(S_sr))``: density proportional to ``exp(-tr(S_sr inv(G)) / 2)``."""
    return inverse_wishart_logpdf(gamma_sr, spec.v_sr, spd_inverse(spec.S_sr_matrix))


def _as_cov(v, dim: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        return float(v) * np.eye(dim)
    if v.ndim == 1:
        return np.diag(np.broadcast_to(v, (dim,)))
    return v


PRIOR_FIELDS = tuple(f.name for f in fields(PriorSpec))


def default_diffuse(family: str = "gaussian") -> PriorSpec:
    """Diffuse default priors for either family."""
    if family not in ("gaussian", "binary"):
        raise ConfigInvalid(f"unknown family {family!r}")
    return PriorSpec()


def log_prior(theta: ModelParameters, spec: PriorSpec, family: str = "gaussian",
              pooled_beta: bool = False) -> float:
    """Sum of the component log prior densities; ``-inf`` outside the support."""
    phi_sr = theta.ar.sr
    phi_gg = theta.ar.gg
    if spectral_radius(phi_sr) >= 1.0 or spectral_radius(phi_gg) >= 1.0:
        return -np.inf
    if family == "binary":
        rho = theta.rho_gg
        if rho is None or not abs(rho) < 1.0:
            return -np.inf
        if not probit_innovation_from(theta.ar.phi_g, theta.ar.phi_gg, rho)[2]:
            return -np.inf
    elif not theta.innov.gg_is_positive_definite():
        return -np.inf
    if not is_positive_definite(theta.innov.sr):
        return -np.inf

    beta = np.asarray(theta.beta, dtype=float)
    bvec = beta[0] if pooled_beta else beta.reshape(-1)
    mb, vb = spec.beta_prior(bvec.size)
    total = mvn_logpdf(bvec, mb, vb)
    m, v = spec.phi_sr_prior
    total += mvn_logpdf(phi_sr.reshape(-1), m, v)
    m, v = spec.phi_gg_prior
    total += mvn_logpdf(np.array([theta.ar.phi_g, theta.ar.phi_gg]), m, v)
    total += gamma_sr_log_prior(theta.innov.sr, spec)
    if family == "binary":
        total += -0.5 * np.log(2 * np.pi * spec.V_rho) - 0.5 * (theta.rho_gg - spec.M_rho) ** 2 / spec.V_rho
    else:
        sa, sb = wong_inverse(theta.innov.gamma2_g, theta.innov.lambda_gg)
        total += inverse_gamma_logpdf(sa, spec.alpha_a, spec.delta_a)
        total += inverse_gamma_logpdf(sb, spec.alpha_b, spec.delta_b)
    return float(total)
