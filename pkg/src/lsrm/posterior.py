"""Posterior chains: storage layout, summaries, derived covariances, ESS."""
from __future__ import annotations

import fnmatch
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ChainTooShort, EmptyChain, LSRMError
from .model import (
    ARCoefficients,
    InnovationCov,
    ModelParameters,
    derived_covariances,
    gg_matrix,
    probit_innovation_from,
    stationary_blocks,
)

SCALAR_NAMES = (
    "phi_s", "phi_sr", "phi_rs", "phi_r", "phi_g", "phi_gg",
    "gamma2_s", "gamma_sr", "gamma2_r", "gamma2_g", "lambda_gg", "rho_gg",
)
FLAG_STEPS = ("phi_sr", "phi_gg", "gamma_sr", "gamma_gg", "rho_gg")
DERIVED_NAMES = (
    "sigma2_s", "sigma_sr", "sigma_rs", "sigma2_r", "rho_sr",
    "sigma2_g", "sigma_gg", "rho_gg", "same_dyad", "reciprocal",
)
QUANTILES = (0.025, 0.5, 0.975)


@dataclass(frozen=True)
class ChainLayout:
    """Column layout of a stored chain.

    Column names: ``beta:<time>:<covariate>`` (``beta:<covariate>`` when pooled),
    the scalar names in :data:`SCALAR_NAMES`, ``s:<actor>:<time>`` and
    ``r:<actor>:<time>``, ``ymis:<sender>:<receiver>:<time>`` for imputed
    responses, optional ``theta:<sender>:<receiver>:<time>`` and acceptance
    flags ``acc:<step>`` (1 accepted, 0 rejected).
    """

    family: str
    actor_labels: tuple
    time_labels: tuple
    covariate_names: tuple
    pooled_beta: bool = False
    has_sr: bool = True
    missing_cells: tuple = ()
    store_theta: bool = False

    def __post_init__(self):
        object.__setattr__(self, "actor_labels", tuple(str(a) for a in self.actor_labels))
        object.__setattr__(self, "time_labels", tuple(self.time_labels))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "missing_cells", tuple(tuple(int(v) for v in c) for c in self.missing_cells))
        object.__setattr__(self, "_names", self._build_names())

    @classmethod
    def from_workspace(cls, ws, store_theta: bool = False) -> "ChainLayout":
        return cls(
            family=ws.family,
            actor_labels=ws.panel.actor_labels,
            time_labels=ws.panel.time_labels,
            covariate_names=ws.covariate_names,
            pooled_beta=ws.pooled_beta,
            has_sr=ws.structure.sr_mode != "none",
            missing_cells=tuple(map(tuple, ws.missing_cells)),
            store_theta=store_theta and ws.family == "binary",
        )

    @property
    def A(self) -> int:
        return len(self.actor_labels)

    @property
    def T(self) -> int:
        return len(self.time_labels)

    @property
    def p(self) -> int:
        return len(self.covariate_names)

    @property
    def names(self) -> tuple:
        return self._names

    def _cell(self, i, j, t) -> str:
        return f"{self.actor_labels[i]}:{self.actor_labels[j]}:{self.time_labels[t]}"

    def _build_names(self):
        names = []
        if self.pooled_beta:
            names += [f"beta:{c}" for c in self.covariate_names]
        else:
            names += [f"beta:{t}:{c}" for t in self.time_labels for c in self.covariate_names]
        names += list(SCALAR_NAMES)
        if self.has_sr:
            for role in ("s", "r"):
                names += [f"{role}:{a}:{t}" for a in self.actor_labels for t in self.time_labels]
        names += [f"ymis:{self._cell(*c)}" for c in self.missing_cells]
        if self.store_theta:
            A, T = self.A, self.T
            names += [f"theta:{self._cell(i, j, t)}" for i in range(A) for j in range(A) if i != j
                      for t in range(T)]
        names += [f"acc:{k}" for k in FLAG_STEPS]
        return tuple(names)

    def flatten(self, params: ModelParameters, z, flags) -> np.ndarray:
        beta = np.asarray(params.beta, dtype=float)
        parts = [beta[0] if self.pooled_beta else beta.reshape(-1)]
        ar, inn = params.ar, params.innov
        rho = np.nan if params.rho_gg is None else params.rho_gg
        parts.append([
            ar.sr[0, 0], ar.sr[0, 1], ar.sr[1, 0], ar.sr[1, 1], ar.phi_g, ar.phi_gg,
            inn.sr[0, 0], inn.sr[0, 1], inn.sr[1, 1], inn.gamma2_g, inn.lambda_gg, rho,
        ])
        if self.has_sr:
            sr = np.asarray(params.sr_effects)
            parts += [sr[:, :, 0].reshape(-1), sr[:, :, 1].reshape(-1)]
        if self.missing_cells:
            idx = tuple(np.array(self.missing_cells).T)
            vals = np.asarray(z)[idx]
            if self.family == "binary":
                vals = (vals > 0).astype(float)
            parts.append(vals)
        if self.store_theta:
            off = ~np.eye(self.A, dtype=bool)
            parts.append(np.asarray(z)[off].reshape(-1))
        parts.append([float(flags[k]) if k in flags else np.nan for k in FLAG_STEPS])
        return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])

    def offsets(self) -> dict:
        """Start index of each column group."""
        nb = self.p if self.pooled_beta else self.T * self.p
        out = {"beta": 0, "scalars": nb}
        k = nb + len(SCALAR_NAMES)
        out["sr"] = k
        if self.has_sr:
            k += 2 * self.A * self.T
        out["ymis"] = k
        k += len(self.missing_cells)
        out["theta"] = k
        if self.store_theta:
            k += self.A * (self.A - 1) * self.T
        out["acc"] = k
        return out

    def params_from_row(self, row) -> ModelParameters:
        row = np.asarray(row, dtype=float)
        off = self.offsets()
        nb = off["scalars"]
        if self.pooled_beta:
            beta = np.tile(row[:nb], (self.T, 1))
        else:
            beta = row[:nb].reshape(self.T, self.p)
        (phi_s, phi_sr, phi_rs, phi_r, phi_g, phi_gg,
         g2s, gsr, g2r, g2g, lam, rho) = row[nb:nb + len(SCALAR_NAMES)]
        ar = ARCoefficients.from_values(phi_s, phi_sr, phi_rs, phi_r, phi_g, phi_gg)
        innov = InnovationCov.from_values(g2s, gsr, g2r, g2g, lam)
        if self.has_sr:
            k = off["sr"]
            n = self.A * self.T
            sr = np.stack([row[k:k + n].reshape(self.A, self.T),
                           row[k + n:k + 2 * n].reshape(self.A, self.T)], axis=-1)
        else:
            sr = np.zeros((self.A, self.T, 2))
        theta = None
        if self.store_theta:
            k = off["theta"]
            theta = np.zeros((self.A, self.A, self.T))
            theta[~np.eye(self.A, dtype=bool)] = row[k:off["acc"]].reshape(-1, self.T)
        return ModelParameters(beta, ar, innov, sr, None if np.isnan(rho) else float(rho), theta)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["missing_cells"] = [list(c) for c in self.missing_cells]
        d["time_labels"] = list(self.time_labels)
        return d

    @classmethod
    def from_dict(cls, d) -> "ChainLayout":
        d = dict(d)
        d["missing_cells"] = tuple(tuple(c) for c in d.get("missing_cells", ()))
        return cls(**{k: d[k] for k in d if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class ChainDraw:
    scan: int
    params: ModelParameters
    imputed: dict
    flags: dict


class PosteriorChain:
    """Saved draws stored column-wise (one row per saved scan)."""

    def __init__(self, layout: ChainLayout, values, scans, meta=None):
        self.layout = layout
        self.values = np.asarray(values, dtype=float).reshape(-1, len(layout.names))
        self.scans = np.asarray(scans, dtype=int)
        if len(self.scans) != len(self.values):
            raise LSRMError("scan index does not match the number of rows")
        self.meta = dict(meta or {})
        self._index = {n: k for k, n in enumerate(layout.names)}

    def __len__(self) -> int:
        return len(self.values)

    @property
    def names(self) -> tuple:
        return self.layout.names

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self._index[name]]
        except KeyError:
            raise KeyError(f"no column named {name!r}") from None

    def select(self, selector=None) -> list:
        """Column names matching a glob pattern, a list of names or a predicate."""
        if selector is None:
            return [n for n in self.names if not n.startswith("acc:")]
        if callable(selector):
            return [n for n in self.names if selector(n)]
        if isinstance(selector, str):
            return [n for n in self.names if fnmatch.fnmatchcase(n, selector)]
        out = []
        for s in selector:
            out += self.select(s) if any(ch in s for ch in "*?[") else [s]
        return out

    def params(self, k: int) -> ModelParameters:
        return self.layout.params_from_row(self.values[k])

    def imputed(self, k: int) -> dict:
        off = self.layout.offsets()
        vals = self.values[k, off["ymis"]:off["theta"]]
        return dict(zip(self.layout.missing_cells, vals.tolist()))

    def flags(self, k: int) -> dict:
        off = self.layout.offsets()["acc"]
        return {s: bool(v) for s, v in zip(FLAG_STEPS, self.values[k, off:]) if not np.isnan(v)}

    @property
    def draws(self) -> list:
        return [ChainDraw(int(self.scans[k]), self.params(k), self.imputed(k), self.flags(k))
                for k in range(len(self))]

    def imputed_matrix(self) -> np.ndarray:
        off = self.layout.offsets()
        return self.values[:, off["ymis"]:off["theta"]]

    def acceptance_rates(self) -> dict:
        out = {}
        for s in FLAG_STEPS:
            col = self.column(f"acc:{s}")
            col = col[~np.isnan(col)]
            if col.size:
                out[s] = float(col.mean())
        return out

    def equals(self, other: "PosteriorChain") -> bool:
        return (self.layout == other.layout and np.array_equal(self.scans, other.scans)
                and np.array_equal(self.values, other.values, equal_nan=True))


def quantile_triplet(x, probs=QUANTILES) -> tuple:
    """Linear-interpolation quantiles (the numpy default)."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise EmptyChain("no draws to summarise")
    return tuple(float(v) for v in np.quantile(x, probs))


def summarize(chain: PosteriorChain, selector=None, probs=QUANTILES) -> dict:
    """``{name: (lower, median, upper)}`` for the selected columns."""
    if len(chain) == 0:
        raise EmptyChain("chain holds no saved draws")
    return {n: quantile_triplet(chain.column(n), probs) for n in chain.select(selector)}


def _derived_one(params: ModelParameters, family: str, T: int, lag: int, has_sr: bool) -> dict:
    ar, inn = params.ar, params.innov
    if family == "binary" and params.rho_gg is not None:
        g2, ggc, _ = probit_innovation_from(ar.phi_g, ar.phi_gg, params.rho_gg)
        gamma_gg = gg_matrix(g2, ggc)
    else:
        gamma_gg = inn.gg
    horizon = max(T, lag + 1)
    s_gg = stationary_blocks(ar.gg, gamma_gg, horizon)
    if has_sr:
        s_sr = stationary_blocks(ar.sr, inn.sr, horizon)
        dc = derived_covariances(s_sr, s_gg, lag)
        vals = (dc.sigma_s, dc.sigma_sr, dc.sigma_rs, dc.sigma_r, dc.rho_sr)
    else:
        dc = derived_covariances(s_gg, s_gg, lag)
        vals = (0.0, 0.0, 0.0, 0.0, np.nan)
    out = dict(zip(DERIVED_NAMES[:5], vals))
    out["sigma2_g"] = dc.sigma_g
    out["sigma_gg"] = dc.sigma_gg
    out["rho_gg"] = dc.rho_gg if lag == 0 else np.nan
    out["same_dyad"] = out["sigma2_s"] + out["sigma2_r"] + dc.sigma_g
    out["reciprocal"] = dc.sigma_gg + out["sigma_sr"] + out["sigma_rs"]
    for k in out:
        out[k] = np.nan if out[k] is None else float(out[k])
    return out


def derived_posterior(chain: PosteriorChain, lag: int = 0) -> dict:
    """Per-draw stationary covariances of the directed relations at ``lag``.

    Returns ``{name: array}`` for the names in :data:`DERIVED_NAMES`.  For the
    probit family ``sigma2_g`` is one by construction.
    """
    if len(chain) == 0:
        raise EmptyChain("chain holds no saved draws")
    lay = chain.layout
    rows = [_derived_one(chain.params(k), lay.family, lay.T, lag, lay.has_sr)
            for k in range(len(chain))]
    return {n: np.array([r[n] for r in rows]) for n in DERIVED_NAMES}


def summarize_derived(chain: PosteriorChain, lag: int = 0) -> dict:
    d = derived_posterior(chain, lag)
    return {n: quantile_triplet(v) if np.all(np.isfinite(v)) else (np.nan,) * 3 for n, v in d.items()}


def effective_sample_size(x) -> float:
    """Effective sample size from Geyer's initial positive sequence.

    A constant chain has ESS 1; the result never exceeds the chain length.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise ChainTooShort(f"need at least 10 draws, got {n}")
    x = x - x.mean()
    var = float(x @ x) / n
    if var <= 1e-300 * max(1.0, float(np.max(np.abs(x)))):
        return 1.0
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n] / n
    rho = acov / acov[0]
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(min(n, n / max(tau, 1e-12)))


def trace_export(chain: PosteriorChain, name: str):
    """``(scans, values)`` for one column."""
    return chain.scans.copy(), chain.column(name).copy()


def imputed_medians(chain: PosteriorChain) -> dict:
    """Posterior median of each imputed response."""
    if len(chain) == 0:
        raise EmptyChain("chain holds no saved draws")
    med = np.median(chain.imputed_matrix(), axis=0)
    return dict(zip(chain.layout.missing_cells, med.tolist()))
