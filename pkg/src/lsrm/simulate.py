"""Forward simulation from the generative model."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DesignInvalid, LSRMError
from .model import (
    ARCoefficients,
    DyadPanel,
    InnovationCov,
    ModelParameters,
    check_stationary,
    dyad_index,
    expand_beta,
    gg_matrix,
    probit_innovation_from,
)
from .numerics import cholesky, solve_discrete_lyapunov

GENERATORS = ("constant", "standard-normal", "table")


@dataclass(frozen=True)
class SimulationDesign:
    """Panel size, covariate generator and true parameters.

    ``beta`` is ``(p,)`` (shared over time) or ``(T, p)``.  The first covariate
    is an intercept.  With ``covariate_generator="constant"`` every other
    covariate is a standard normal drawn once per directed pair and held fixed
    over time; ``"standard-normal"`` draws afresh each period; ``"table"`` uses
    ``covariate_table`` of shape ``(A, A, T, p)`` as given.  For the binary
    family ``innov.gg`` is ignored and derived from ``rho_gg``.
    """

    A: int = 20
    T: int = 10
    p: int = 2
    beta: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.5]))
    ar: ARCoefficients = field(default_factory=lambda: ARCoefficients.from_values())
    innov: InnovationCov = field(default_factory=lambda: InnovationCov.from_values())
    rho_gg: float | None = None
    family: str = "gaussian"
    covariate_generator: str = "standard-normal"
    covariate_table: np.ndarray | None = None
    missing_fraction: float = 0.0
    actor_labels: tuple = ()
    covariate_names: tuple = ()
    sr_enabled: bool = True

    def __post_init__(self):
        if self.A < 2 or self.T < 1 or self.p < 1:
            raise DesignInvalid("need A >= 2, T >= 1 and p >= 1")
        if self.family not in ("gaussian", "binary"):
            raise DesignInvalid(f"unknown family {self.family!r}")
        if self.covariate_generator not in GENERATORS:
            raise DesignInvalid(f"covariate_generator must be one of {GENERATORS}")
        if self.covariate_generator == "table":
            tab = self.covariate_table
            if tab is None or np.shape(tab) != (self.A, self.A, self.T, self.p):
                raise DesignInvalid("covariate table must have shape (A, A, T, p)")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise DesignInvalid("missing_fraction must lie in [0, 1)")
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape not in ((self.p,), (self.T, self.p)):
            raise DesignInvalid(f"beta must have shape ({self.p},) or ({self.T}, {self.p})")
        st = check_stationary(self.ar)
        if not (st["sr"] and st["gg"]):
            raise DesignInvalid("true AR coefficients must be stationary")
        if self.family == "binary":
            rho = 0.0 if self.rho_gg is None else self.rho_gg
            if not probit_innovation_from(self.ar.phi_g, self.ar.phi_gg, rho)[2] or abs(rho) >= 1:
                raise DesignInvalid("rho_gg and phi_gg give no valid innovation covariance")
        for name, m in (("gamma_sr", self.innov.sr), ("gamma_gg", self.gamma_gg)):
            try:
                cholesky(m)
            except LSRMError as exc:
                raise DesignInvalid(f"{name} must be positive definite") from exc
        if self.actor_labels and len(self.actor_labels) != self.A:
            raise DesignInvalid("actor_labels must have length A")
        if self.covariate_names and len(self.covariate_names) != self.p:
            raise DesignInvalid("covariate_names must have length p")

    @property
    def gamma_gg(self) -> np.ndarray:
        if self.family == "binary":
            rho = 0.0 if self.rho_gg is None else self.rho_gg
            g2, ggc, _ = probit_innovation_from(self.ar.phi_g, self.ar.phi_gg, rho)
            return gg_matrix(g2, ggc)
        return np.asarray(self.innov.gg)

    @property
    def labels(self) -> tuple:
        return tuple(self.actor_labels) or tuple(f"a{k + 1:02d}" for k in range(self.A))

    @property
    def names(self) -> tuple:
        return tuple(self.covariate_names) or ("intercept",) + tuple(
            f"x{k}" for k in range(1, self.p))


@dataclass(frozen=True)
class SimulatedPanel:
    panel: DyadPanel
    truth: ModelParameters
    complete_y: np.ndarray


def _var_paths(phi, gamma, n, T, rng):
    """``n`` independent stationary bivariate VAR(1) paths, shape ``(n, T, 2)``."""
    phi = np.asarray(phi, dtype=float)
    s0 = solve_discrete_lyapunov(phi, gamma)
    l0 = np.linalg.cholesky(s0)
    lg = np.linalg.cholesky(np.asarray(gamma, dtype=float))
    out = np.empty((n, T, 2))
    out[:, 0] = rng.standard_normal((n, 2)) @ l0.T
    for t in range(1, T):
        out[:, t] = out[:, t - 1] @ phi.T + rng.standard_normal((n, 2)) @ lg.T
    return out


def simulate_effects(ar: ARCoefficients, innov: InnovationCov, A: int, T: int, rng,
                     gamma_gg=None):
    """Sender/receiver paths ``(A, T, 2)`` and dyad residuals ``(A, A, T)``.

    ``gamma_gg`` overrides ``innov.gg`` (the probit family derives it).
    """
    sr = _var_paths(ar.sr, innov.sr, A, T, rng)
    I, J = dyad_index(A)
    gg = innov.gg if gamma_gg is None else gamma_gg
    paths = _var_paths(ar.gg, gg, len(I), T, rng)
    g = np.zeros((A, A, T))
    g[I, J] = paths[..., 0]
    g[J, I] = paths[..., 1]
    return sr, g


def draw_covariates(design: SimulationDesign, rng) -> np.ndarray:
    A, T, p = design.A, design.T, design.p
    if design.covariate_generator == "table":
        x = np.array(design.covariate_table, dtype=float)
    else:
        x = np.ones((A, A, T, p))
        if p > 1:
            if design.covariate_generator == "constant":
                x[..., 1:] = rng.standard_normal((A, A, 1, p - 1))
            else:
                x[..., 1:] = rng.standard_normal((A, A, T, p - 1))
    x[np.eye(A, dtype=bool)] = 0.0
    return x


def simulate_panel(design: SimulationDesign, rng) -> SimulatedPanel:
    """Draw covariates, effects and responses; apply the missing mask uniformly."""
    A, T = design.A, design.T
    x = draw_covariates(design, rng)
    beta = expand_beta(design.beta, T)
    gamma_gg = design.gamma_gg
    sr, g = simulate_effects(design.ar, design.innov, A, T, rng, gamma_gg=gamma_gg)
    if not design.sr_enabled:
        sr = np.zeros_like(sr)
    latent = np.einsum("ijtk,tk->ijt", x, beta) + sr[:, None, :, 0] + sr[None, :, :, 1] + g
    off = ~np.eye(A, dtype=bool)
    latent[~off] = 0.0
    y = (latent > 0).astype(float) if design.family == "binary" else latent.copy()
    observed = np.broadcast_to(off[:, :, None], y.shape).copy()
    if design.missing_fraction > 0:
        cells = np.argwhere(observed)
        k = int(round(design.missing_fraction * len(cells)))
        pick = cells[rng.choice(len(cells), size=k, replace=False)]
        observed[tuple(pick.T)] = False
    complete = np.where(off[:, :, None], y, np.nan)
    y_obs = np.where(observed, y, np.nan)
    panel = DyadPanel(design.labels, y_obs, observed, x, design.names, design.family,
                      tuple(range(1, T + 1)))
    innov = InnovationCov(design.innov.sr, gamma_gg)
    rho = design.rho_gg if design.family == "binary" else None
    if design.family == "binary" and rho is None:
        rho = 0.0
    truth = ModelParameters(beta, design.ar, innov, sr, rho,
                            latent if design.family == "binary" else None)
    return SimulatedPanel(panel, truth, complete)


def with_truth(design: SimulationDesign, **changes) -> SimulationDesign:
    return replace(design, **changes)


def recovery_design(A: int = 20, T: int = 10, family: str = "gaussian", rho_gg: float = 0.32,
                    beta=(1.0, 0.5), missing_fraction: float = 0.0) -> SimulationDesign:
    """Desk-scale design with persistent sender effects and moderate dyadic dependence.

    The dyadic innovation covariance is scaled so the stationary residual
    correlation equals ``rho_gg``.
    """
    ar = ARCoefficients.from_values(0.9, 0.0, 0.2, 0.5, 0.67, 0.10)
    g2, ggc, valid = probit_innovation_from(0.67, 0.10, rho_gg)
    if not valid:
        raise DesignInvalid("rho_gg incompatible with the default dyadic coefficients")
    innov = InnovationCov.from_values(1.0, 0.5, 1.0, 1.0, ggc / g2)
    return SimulationDesign(A=A, T=T, p=len(beta), beta=np.array(beta, dtype=float), ar=ar,
                            innov=innov, rho_gg=rho_gg if family == "binary" else None,
                            family=family, missing_fraction=missing_fraction)
