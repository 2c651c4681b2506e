"""Domain types and covariance algebra for longitudinal social relations data.

Conventions
-----------
* Directed relations live in arrays indexed ``[sender, receiver, time]``;
  the diagonal ``i == j`` is undefined and kept at zero / unobserved.
* Sender-receiver effects are stored as ``sr[actor, time, role]`` with role 0
  the sender effect ``s`` and role 1 the receiver effect ``r``.
* A dyad ``(i, j)`` with ``i < j`` is stacked time-major with the two
  directions interleaved: ``(y_ij1, y_ji1, y_ij2, y_ji2, ...)``.
* Lag blocks follow ``Sigma(d) = Cov(x_t, x_{t+d}) = Sigma(0) (Phi')^d``; in the
  assembled block-Toeplitz matrix block ``(u, v)`` is ``Sigma(v-u)`` above the
  diagonal and its transpose below.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import (
    DimensionMismatch,
    LagOutOfRange,
    NonpositiveVariance,
    NonstationaryCoefficients,
)
from .numerics import solve_discrete_lyapunov, spectral_radius

FAMILIES = ("gaussian", "binary")


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DyadPanel:
    """Directed dyadic panel: ``y[i, j, t]`` plus covariates ``x[i, j, t, k]``.

    ``observed`` marks which responses are present; unobserved entries of
    ``y`` hold NaN.  Covariates must be complete off the diagonal.
    """

    actor_labels: tuple
    y: np.ndarray
    observed: np.ndarray
    x: np.ndarray
    covariate_names: tuple
    family: str = "gaussian"
    time_labels: tuple = ()

    def __post_init__(self):
        labels = tuple(str(a) for a in self.actor_labels)
        object.__setattr__(self, "actor_labels", labels)
        object.__setattr__(self, "covariate_names", tuple(str(c) for c in self.covariate_names))
        y = np.array(self.y, dtype=float)
        x = np.array(self.x, dtype=float)
        obs = np.array(self.observed, dtype=bool)
        n = len(labels)
        if y.ndim != 3 or y.shape[0] != n or y.shape[1] != n:
            raise DimensionMismatch(f"y must be (A, A, T) with A={n}, got {y.shape}")
        a, _, t = y.shape
        if x.ndim != 4 or x.shape[:3] != (a, a, t):
            raise DimensionMismatch(f"x must be (A, A, T, p), got {x.shape}")
        if x.shape[3] != len(self.covariate_names):
            raise DimensionMismatch("covariate_names does not match x")
        if obs.shape != y.shape:
            raise DimensionMismatch("observed mask does not match y")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        diag = np.eye(a, dtype=bool)
        obs[diag] = False
        obs &= np.isfinite(y)
        y[~obs] = np.nan
        x[diag] = 0.0
        off = ~diag
        if not np.all(np.isfinite(x[off])):
            raise ValueError("covariates must be fully observed off the diagonal")
        if self.family == "binary":
            vals = y[obs]
            if not np.all((vals == 0.0) | (vals == 1.0)):
                raise ValueError("binary family requires y in {0, 1}")
        times = tuple(self.time_labels) if self.time_labels else tuple(range(1, t + 1))
        if len(times) != t:
            raise DimensionMismatch("time_labels does not match T")
        object.__setattr__(self, "time_labels", times)
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "x", _freeze(x))
        obs.setflags(write=False)
        object.__setattr__(self, "observed", obs)

    @property
    def A(self) -> int:
        return self.y.shape[0]

    @property
    def T(self) -> int:
        return self.y.shape[2]

    @property
    def p(self) -> int:
        return self.x.shape[3]

    @property
    def n_missing(self) -> int:
        off = ~np.eye(self.A, dtype=bool)
        return int(np.sum(~self.observed[off]))

    def with_observed(self, observed) -> "DyadPanel":
        """Copy with a narrower observed mask (used for holdout masking)."""
        observed = np.asarray(observed, dtype=bool) & self.observed
        y = np.where(observed, self.y, np.nan)
        return DyadPanel(self.actor_labels, y, observed, self.x, self.covariate_names,
                         self.family, self.time_labels)

    def with_covariates(self, x, names) -> "DyadPanel":
        return DyadPanel(self.actor_labels, self.y, self.observed, x, names,
                         self.family, self.time_labels)


def dyad_index(A: int):
    """Sender/receiver index arrays of the unordered dyads ``i < j``."""
    return np.triu_indices(A, 1)


def pair_stack(arr, I, J) -> np.ndarray:
    """(A, A, T) directed array -> (D, T, 2) pairs ``(a[i,j,t], a[j,i,t])``."""
    return np.stack([arr[I, J], arr[J, I]], axis=-1)


@dataclass(frozen=True)
class ARCoefficients:
    """Lag-one coefficient matrices for the actor (``sr``) and dyad (``gg``) processes."""

    sr: np.ndarray
    gg: np.ndarray

    def __post_init__(self):
        sr = _freeze(self.sr)
        gg = _freeze(self.gg)
        if sr.shape != (2, 2) or gg.shape != (2, 2):
            raise DimensionMismatch("AR coefficient matrices must be 2x2")
        if gg[0, 0] != gg[1, 1] or gg[0, 1] != gg[1, 0]:
            raise ValueError("dyadic AR matrix must be [[phi_g, phi_gg], [phi_gg, phi_g]]")
        object.__setattr__(self, "sr", sr)
        object.__setattr__(self, "gg", gg)

    @classmethod
    def from_values(cls, phi_s=0.0, phi_sr=0.0, phi_rs=0.0, phi_r=0.0, phi_g=0.0, phi_gg=0.0):
        return cls(np.array([[phi_s, phi_sr], [phi_rs, phi_r]]), gg_matrix(phi_g, phi_gg))

    @property
    def phi_g(self) -> float:
        return float(self.gg[0, 0])

    @property
    def phi_gg(self) -> float:
        return float(self.gg[0, 1])


def gg_matrix(diag, off) -> np.ndarray:
    return np.array([[diag, off], [off, diag]], dtype=float)


@dataclass(frozen=True)
class InnovationCov:
    """Innovation covariances; ``gg`` is exchangeable (equal diagonal)."""

    sr: np.ndarray
    gg: np.ndarray

    def __post_init__(self):
        sr = _freeze(self.sr)
        gg = _freeze(self.gg)
        if sr.shape != (2, 2) or gg.shape != (2, 2):
            raise DimensionMismatch("innovation covariances must be 2x2")
        object.__setattr__(self, "sr", sr)
        object.__setattr__(self, "gg", gg)

    @classmethod
    def from_values(cls, gamma2_s=1.0, gamma_sr=0.0, gamma2_r=1.0, gamma2_g=1.0, lambda_gg=0.0):
        sr = np.array([[gamma2_s, gamma_sr], [gamma_sr, gamma2_r]])
        return cls(sr, gg_matrix(gamma2_g, lambda_gg * gamma2_g))

    @property
    def gamma2_g(self) -> float:
        return float(self.gg[0, 0])

    @property
    def lambda_gg(self) -> float:
        return float(self.gg[0, 1] / self.gg[0, 0])

    def gg_is_positive_definite(self) -> bool:
        return self.gamma2_g > 0 and abs(self.lambda_gg) < 1


@dataclass(frozen=True)
class StationaryCovariance:
    lag_blocks: tuple
    assembled: np.ndarray

    @property
    def T(self) -> int:
        return len(self.lag_blocks)

    def block(self, d: int) -> np.ndarray:
        if not 0 <= d < self.T:
            raise LagOutOfRange(f"lag {d} outside 0..{self.T - 1}")
        return self.lag_blocks[d]


@dataclass(frozen=True)
class ModelParameters:
    """One full parameter state.

    ``beta`` is ``(T, p)``; ``sr_effects`` is ``(A, T, 2)``.  ``rho_gg`` and
    ``theta`` are only used by the probit family.
    """

    beta: np.ndarray
    ar: ARCoefficients
    innov: InnovationCov
    sr_effects: np.ndarray
    rho_gg: float | None = None
    theta: np.ndarray | None = None

    @property
    def sigma_ab(self):
        """Sum/difference innovation variances ``(sigma2_a, sigma2_b)``."""
        return wong_inverse(self.innov.gamma2_g, self.innov.lambda_gg)


def check_stationary(ar) -> dict | bool:
    """Spectral radius < 1 test; a bare matrix gives a bool, ``ARCoefficients`` a dict."""
    if isinstance(ar, ARCoefficients):
        return {"sr": spectral_radius(ar.sr) < 1.0, "gg": spectral_radius(ar.gg) < 1.0}
    return spectral_radius(ar) < 1.0


def assemble_block_toeplitz(blocks: Sequence[np.ndarray]) -> np.ndarray:
    T = len(blocks)
    k = blocks[0].shape[0]
    out = np.empty((k * T, k * T))
    for u in range(T):
        for v in range(T):
            b = blocks[v - u] if v >= u else blocks[u - v].T
            out[k * u:k * (u + 1), k * v:k * (v + 1)] = b
    return out


def stationary_blocks(phi, gamma, T: int) -> StationaryCovariance:
    """Lag blocks Sigma(0..T-1) of a stationary VAR(1) and their assembly."""
    phi = np.asarray(phi, dtype=float)
    if spectral_radius(phi) >= 1.0:
        raise NonstationaryCoefficients("coefficient matrix is not stationary")
    s0 = solve_discrete_lyapunov(phi, gamma)
    blocks = [s0]
    power = np.eye(phi.shape[0])
    for _ in range(1, T):
        power = power @ phi.T
        blocks.append(s0 @ power)
    blocks = tuple(_freeze(b) for b in blocks)
    return StationaryCovariance(blocks, _freeze(assemble_block_toeplitz(blocks)))


def probit_innovation_from(phi_g: float, phi_gg: float, rho_gg: float):
    """Innovation ``(gamma2_g, gamma_gg)`` that keeps Sigma_gg(0) a correlation matrix.

    Returns ``(gamma2_g, gamma_gg, valid)`` where ``valid`` says whether the
    implied innovation covariance is positive definite.
    """
    g2 = 1.0 - phi_g ** 2 - phi_gg ** 2 - 2.0 * rho_gg * phi_g * phi_gg
    ggc = rho_gg - 2.0 * phi_g * phi_gg - rho_gg * phi_g ** 2 - rho_gg * phi_gg ** 2
    valid = bool(g2 > 0 and abs(ggc) < g2)
    return g2, ggc, valid


def wong_transform(sigma_a2: float, sigma_b2: float):
    """``(sigma2_a, sigma2_b) -> (gamma2_g, lambda_gg)``."""
    if not (sigma_a2 > 0 and sigma_b2 > 0):
        raise NonpositiveVariance("sum/difference variances must be positive")
    total = sigma_a2 + sigma_b2
    return total / 4.0, (sigma_a2 - sigma_b2) / total


def wong_inverse(gamma2_g: float, lambda_gg: float):
    """``(gamma2_g, lambda_gg) -> (sigma2_a, sigma2_b)``."""
    if not gamma2_g > 0 or not abs(lambda_gg) < 1:
        raise NonpositiveVariance("need gamma2_g > 0 and |lambda_gg| < 1")
    return 2.0 * gamma2_g * (1.0 + lambda_gg), 2.0 * gamma2_g * (1.0 - lambda_gg)


@dataclass(frozen=True)
class DerivedCovariances:
    """Covariances of directed relations at lag ``d`` implied by the model.

    ``sigma_sr`` is Cov(s_t, r_{t+d}) and ``sigma_rs`` is Cov(r_t, s_{t+d}); at
    ``d = 0`` both equal the sender-receiver covariance.
    """

    lag: int
    sigma_s: float
    sigma_r: float
    sigma_sr: float
    sigma_rs: float
    sigma_g: float
    sigma_gg: float
    rho_sr: float | None = None
    rho_gg: float | None = None

    @property
    def same_dyad(self) -> float:
        """Cov(y_ijt, y_ij,t+d)."""
        return self.sigma_s + self.sigma_r + self.sigma_g

    @property
    def reciprocal(self) -> float:
        """Cov(y_ijt, y_ji,t+d)."""
        return self.sigma_gg + self.sigma_sr + self.sigma_rs

    def as_dict(self) -> dict:
        out = {
            "sigma_s": self.sigma_s, "sigma_r": self.sigma_r, "sigma_sr": self.sigma_sr,
            "sigma_rs": self.sigma_rs, "sigma_g": self.sigma_g, "sigma_gg": self.sigma_gg,
            "same_dyad": self.same_dyad, "reciprocal": self.reciprocal,
        }
        if self.lag == 0:
            out["rho_sr"] = self.rho_sr
            out["rho_gg"] = self.rho_gg
        return out


def derived_covariances(sigma_sr: StationaryCovariance, sigma_gg: StationaryCovariance,
                        d: int = 0) -> DerivedCovariances:
    if not 0 <= d < min(sigma_sr.T, sigma_gg.T):
        raise LagOutOfRange(f"lag {d} outside the observed horizon")
    bsr = sigma_sr.block(d)
    bgg = sigma_gg.block(d)
    rho_sr = rho_gg = None
    if d == 0:
        rho_sr = float(bsr[0, 1] / np.sqrt(bsr[0, 0] * bsr[1, 1]))
        rho_gg = float(bgg[0, 1] / bgg[0, 0])
    return DerivedCovariances(
        lag=d,
        sigma_s=float(bsr[0, 0]), sigma_r=float(bsr[1, 1]),
        sigma_sr=float(bsr[0, 1]), sigma_rs=float(bsr[1, 0]),
        sigma_g=float(bgg[0, 0]), sigma_gg=float(bgg[0, 1]),
        rho_sr=rho_sr, rho_gg=rho_gg,
    )


def expand_beta(beta, T: int) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.ndim == 1:
        return np.tile(beta, (T, 1))
    return beta


def linear_predictor(panel_or_x, beta):
    """Fixed-effect mean ``eta[i, j, t] = beta_t' x[i, j, t]`` and its paired form.

    Returns ``(eta, eta_pairs)`` where ``eta_pairs`` is ``(D, 2T)`` stacked
    time-major with directions interleaved.
    """
    x = panel_or_x.x if isinstance(panel_or_x, DyadPanel) else np.asarray(panel_or_x)
    A, _, T, p = x.shape
    beta = expand_beta(beta, T)
    if beta.shape != (T, p):
        raise DimensionMismatch(f"beta must be ({T}, {p}) or ({p},), got {beta.shape}")
    eta = np.einsum("ijtk,tk->ijt", x, beta)
    I, J = dyad_index(A)
    return eta, pair_stack(eta, I, J).reshape(len(I), 2 * T)


def glm_covariance_approximation(cov_theta: float, eta1: float, eta2: float,
                                 link_derivative: Callable[[float], float] | None = None) -> float:
    """First-order covariance of two GLM responses from the covariance of their
    linear predictors.  ``link_derivative`` defaults to the identity link."""
    if link_derivative is None:
        return float(cov_theta)
    return float(cov_theta * link_derivative(eta1) * link_derivative(eta2))


def probit_link_derivative(eta: float) -> float:
    return float(norm.pdf(eta))
