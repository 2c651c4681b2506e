"""Run configuration, model dispatch, holdout prediction and report files.

Run config keys (all optional)::

    family = gaussian            # or binary
    model = M1                   # M1..M5 or M3-iid
    pooled_beta = false
    total_scans = 5000
    burn_in = 1000
    thin = 5
    gibbs_vs_randomwalk_probability = 0.5
    rw_step_phi = 0.05
    rw_step_gamma = 0.1
    rho_halfwidth = 0.1
    seed = 1
    store_theta = false
    chain_format = text          # or binary
    holdout_fraction = 0.25
    models = M1,M4,M5            # predict only
    prior.V_beta = 100           # any PriorSpec field; lists are comma separated

Simulation design keys: ``actors``, ``times``, ``covariates`` (p, counting the
intercept), ``covariate_generator``, ``covariate_table`` (a panel file whose
covariate columns are used), ``family``, ``missing_fraction``, ``beta``
(p or T*p values), ``phi_sr`` (4 values, row-major), ``gamma_sr`` (3 values
``gamma2_s, gamma_sr, gamma2_r`` or 4 row-major), ``phi_gg`` (``phi_g, phi_gg``),
``gamma_gg`` (``gamma2_g, lambda_gg``), ``rho_gg``, ``sr_effects`` (true/false).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid, DesignInvalid, EmptyChain, LSRMError
from .gaussian import SUBMODELS, SamplerConfig, Workspace, run_chain
from .io import (
    BinaryChainWriter,
    atomic_write_text,
    format_table,
    format_trace,
    kv_bool,
    kv_float,
    kv_floats,
    kv_int,
    read_chain,
    read_kv,
    read_panel,
    write_chain,
    write_panel,
)
from .model import ARCoefficients, DyadPanel, InnovationCov
from .numerics import rng_stream
from .posterior import (
    SCALAR_NAMES,
    ChainLayout,
    PosteriorChain,
    effective_sample_size,
    imputed_medians,
    summarize,
    summarize_derived,
)
from .priors import PRIOR_FIELDS, PriorSpec
from .probit import run_chain_probit
from .simulate import SimulationDesign, simulate_panel

SAMPLER_INT_KEYS = ("total_scans", "burn_in", "thin", "seed")
SAMPLER_FLOAT_KEYS = ("gibbs_vs_randomwalk_probability", "rw_step_phi", "rw_step_gamma",
                      "rho_halfwidth")


@dataclass(frozen=True)
class RunConfig:
    family: str = "gaussian"
    model: str = "M1"
    pooled_beta: bool = False
    priors: PriorSpec = field(default_factory=PriorSpec)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    holdout_fraction: float = 0.25
    out_dir: str | None = None
    models: tuple = ("M1", "M4", "M5")
    chain_format: str = "text"

    def __post_init__(self):
        if self.family not in ("gaussian", "binary"):
            raise ConfigInvalid(f"family must be gaussian or binary, got {self.family!r}")
        for m in (self.model,) + tuple(self.models):
            if m not in SUBMODELS:
                raise ConfigInvalid(f"unknown model {m!r}; choose from {', '.join(SUBMODELS)}")
        if not 0.0 <= self.holdout_fraction <= 0.5:
            raise ConfigInvalid("holdout_fraction must lie in [0, 0.5]")
        if self.chain_format not in ("text", "binary"):
            raise ConfigInvalid("chain_format must be text or binary")

    @property
    def seed(self) -> int:
        return self.sampler.seed

    def sampler_for(self, model: str | None = None, stream: int = 0) -> SamplerConfig:
        return replace(self.sampler, structure=SUBMODELS[model or self.model],
                       pooled_beta=self.pooled_beta, stream=stream)


def run_config_from_kv(kv: dict, **overrides) -> RunConfig:
    """Build a :class:`RunConfig` from parsed key-value pairs.

    ``overrides`` (command-line flags) win over the file; None values are ignored.
    """
    kv = dict(kv)
    top, sampler, prior = {}, {}, {}
    for key, value in kv.items():
        if key.startswith("prior."):
            name = key[len("prior."):]
            if name not in PRIOR_FIELDS:
                raise ConfigInvalid(f"unknown prior field {name!r}")
            nums = kv_floats(value, key)
            if len(nums) == 1:
                prior[name] = nums[0]
            elif name.startswith("M_"):
                prior[name] = tuple(nums)
            else:
                prior[name] = _matrix_or_vector(nums)
        elif key in SAMPLER_INT_KEYS:
            sampler[key] = kv_int(value, key)
        elif key in SAMPLER_FLOAT_KEYS:
            sampler[key] = kv_float(value, key)
        elif key == "store_theta":
            sampler[key] = kv_bool(value, key)
        elif key == "pooled_beta":
            top[key] = kv_bool(value, key)
        elif key == "holdout_fraction":
            top[key] = kv_float(value, key)
        elif key in ("family", "model", "chain_format", "out_dir"):
            top[key] = value
        elif key == "models":
            top[key] = tuple(v.strip() for v in value.split(",") if v.strip())
        else:
            raise ConfigInvalid(f"unknown config key {key!r}")
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "seed":
            sampler["seed"] = int(value)
        else:
            top[key] = value
    try:
        priors = PriorSpec(**prior)
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from None
    return RunConfig(priors=priors, sampler=SamplerConfig(**sampler), **top)


def _matrix_or_vector(nums):
    n = len(nums)
    k = int(round(n ** 0.5))
    if k > 1 and k * k == n and n != 2:
        return np.array(nums).reshape(k, k)
    return tuple(nums)


def load_run_config(path=None, **overrides) -> RunConfig:
    return run_config_from_kv(read_kv(path) if path else {}, **overrides)


# ---------------------------------------------------------------------------
# fitting


def fit(panel: DyadPanel, config: RunConfig, stream: int = 0, write: bool = True) -> PosteriorChain:
    """Fit the configured submodel; writes the chain and run record when
    ``config.out_dir`` is set."""
    if panel.family != config.family:
        raise ConfigInvalid(f"config family {config.family!r} does not match panel family {panel.family!r}")
    sampler = config.sampler_for(stream=stream)
    runner = run_chain_probit if panel.family == "binary" else run_chain
    out = Path(config.out_dir) if (config.out_dir and write) else None
    if out is not None and config.chain_format == "binary":
        layout = ChainLayout.from_workspace(Workspace(panel, sampler.structure, sampler.pooled_beta),
                                            store_theta=sampler.store_theta)
        head = {"model": config.model, "config": sampler.as_dict(), "seed": config.seed}
        with BinaryChainWriter(out / "chain.bin", layout, head) as writer:
            chain = runner(panel, config.priors, sampler, on_draw=writer.write)
        chain.meta["model"] = config.model
    else:
        chain = runner(panel, config.priors, sampler)
        chain.meta["model"] = config.model
        if out is not None:
            write_chain(chain, out / "chain.csv")
    if out is not None:
        record = {"model": config.model, "family": config.family, "seed": config.seed,
                  "draws": len(chain), "acceptance_rates": chain.meta.get("acceptance_rates", {})}
        atomic_write_text(out / "run.json", json.dumps(record, indent=2, sort_keys=True) + "\n")
    return chain


def holdout_mask(panel: DyadPanel, fraction: float, rng) -> np.ndarray:
    """Boolean ``(A, A, T)`` mask of observed responses to hold out."""
    cells = np.argwhere(panel.observed)
    k = int(round(fraction * len(cells)))
    mask = np.zeros(panel.observed.shape, dtype=bool)
    if k:
        pick = cells[np.sort(rng.choice(len(cells), size=k, replace=False))]
        mask[tuple(pick.T)] = True
    return mask


def holdout_mse(panel: DyadPanel, config: RunConfig, models=None, rng=None) -> list:
    """Mask one holdout set, fit each model on the rest and score the
    posterior-median predictions.

    Returns a list of ``(model, mse, n_holdout)`` rows.
    """
    if panel.family != "gaussian":
        raise ConfigInvalid("holdout_mse needs a gaussian panel")
    if not config.holdout_fraction > 0:
        raise ConfigInvalid("holdout_fraction must be positive")
    models = tuple(models or config.models)
    if rng is None:
        rng = rng_stream(config.seed, 10_000)
    mask = holdout_mask(panel, config.holdout_fraction, rng)
    train = panel.with_observed(panel.observed & ~mask)
    held = [tuple(c) for c in np.argwhere(mask)]
    truth = np.array([panel.y[c] for c in held])
    out = []
    for k, model in enumerate(models):
        cfg = replace(config, model=model, out_dir=None)
        chain = fit(train, cfg, stream=k, write=False)
        med = imputed_medians(chain)
        pred = np.array([med[c] for c in held])
        out.append((model, float(np.mean((pred - truth) ** 2)), len(held)))
    return out


def format_mse_table(rows) -> str:
    return format_table(("model", "mse", "n_holdout"), rows)


# ---------------------------------------------------------------------------
# summaries


def summary_tables(chain: PosteriorChain) -> dict:
    """Delimited-text report tables keyed by file name."""
    if len(chain) == 0:
        raise EmptyChain("chain holds no saved draws")
    lay = chain.layout
    files = {}
    rows = []
    qs = summarize(chain, "beta:*")
    for name, (lo, med, hi) in qs.items():
        parts = name.split(":")
        time, cov = ("all", parts[1]) if lay.pooled_beta else (parts[1], parts[2])
        rows.append((time, cov, lo, med, hi))
    files["beta_intervals.csv"] = format_table(("time", "covariate", "q2.5", "median", "q97.5"), rows)

    if lay.has_sr:
        rows = []
        for k in range(len(chain)):
            sr = chain.params(k).sr_effects
            for a, actor in enumerate(lay.actor_labels):
                for t, tl in enumerate(lay.time_labels):
                    rows.append((int(chain.scans[k]), actor, tl, float(sr[a, t, 0]), float(sr[a, t, 1])))
        files["sr_samples.csv"] = format_table(("scan", "actor", "time", "s", "r"), rows)

    derived = summarize_derived(chain)
    rows = []
    for name in ("sigma2_s", "sigma_sr", "rho_sr", "sigma2_r", "sigma2_g", "sigma_gg", "rho_gg"):
        if name == "sigma2_g" and lay.family == "binary":
            rows.append((name, 1.0, 1.0, 1.0))
            continue
        if name in ("sigma2_s", "sigma_sr", "rho_sr", "sigma2_r") and not lay.has_sr:
            continue
        rows.append((name,) + tuple(derived[name]))
    files["covariance_table.csv"] = format_table(("quantity", "q2.5", "median", "q97.5"), rows)

    rows = []
    for name in SCALAR_NAMES:
        col = chain.column(name)
        if np.all(np.isnan(col)):
            continue
        lo, med, hi = summarize(chain, [name])[name]
        ess = effective_sample_size(col) if len(col) >= 10 else float("nan")
        rows.append((name, lo, med, hi, ess))
    files["parameter_table.csv"] = format_table(("quantity", "q2.5", "median", "q97.5", "ess"), rows)
    files["phi_table.csv"] = format_table(
        ("quantity", "q2.5", "median", "q97.5", "ess"), [r for r in rows if r[0].startswith("phi_")])

    for name in SCALAR_NAMES:
        col = chain.column(name)
        if not np.all(np.isnan(col)):
            files[f"traces/{name}.csv"] = format_trace(chain.scans, col)
    return files


def summarize_to_dir(chain_path, out_dir) -> list:
    chain = read_chain(chain_path)
    files = summary_tables(chain)
    out = Path(out_dir)
    for name, text in files.items():
        atomic_write_text(out / name, text)
    return sorted(files)


# ---------------------------------------------------------------------------
# simulation designs


def design_from_kv(kv: dict, family: str | None = None) -> SimulationDesign:
    known = {"actors", "times", "covariates", "covariate_generator", "covariate_table", "family",
             "missing_fraction", "beta", "phi_sr", "gamma_sr", "phi_gg", "gamma_gg", "rho_gg",
             "sr_effects"}
    for key in kv:
        if key not in known:
            raise DesignInvalid(f"unknown design key {key!r}")
    try:
        A = kv_int(kv.get("actors", "20"), "actors")
        T = kv_int(kv.get("times", "10"), "times")
        p = kv_int(kv.get("covariates", "2"), "covariates")
        fam = family or kv.get("family", "gaussian")
        beta = np.array(kv_floats(kv.get("beta", ",".join(["1.0"] + ["0.5"] * (p - 1))), "beta"))
        if beta.size == T * p and beta.size != p:
            beta = beta.reshape(T, p)
        phi_sr = kv_floats(kv.get("phi_sr", "0.9,0,0.2,0.5"), "phi_sr")
        g_sr = kv_floats(kv.get("gamma_sr", "1,0.5,1"), "gamma_sr")
        phi_gg = kv_floats(kv.get("phi_gg", "0.67,0.1"), "phi_gg")
        g_gg = kv_floats(kv.get("gamma_gg", "1,0.2"), "gamma_gg")
        rho = kv_float(kv["rho_gg"], "rho_gg") if "rho_gg" in kv else None
        miss = kv_float(kv.get("missing_fraction", "0"), "missing_fraction")
        sr_on = kv_bool(kv.get("sr_effects", "true"), "sr_effects")
    except ConfigInvalid as exc:
        raise DesignInvalid(str(exc)) from None
    if len(phi_sr) != 4 or len(phi_gg) != 2 or len(g_gg) != 2 or len(g_sr) not in (3, 4):
        raise DesignInvalid("wrong number of values for phi_sr, phi_gg, gamma_sr or gamma_gg")
    if len(g_sr) == 4:
        if g_sr[1] != g_sr[2]:
            raise DesignInvalid("gamma_sr must be symmetric")
        g_sr = [g_sr[0], g_sr[1], g_sr[3]]
    generator = kv.get("covariate_generator", "standard-normal")
    table = None
    names = ()
    if generator == "table":
        if "covariate_table" not in kv:
            raise DesignInvalid("covariate_generator = table needs covariate_table")
        src = read_panel(kv["covariate_table"])
        table, names = np.array(src.x), src.covariate_names
        A, T, p = src.A, src.T, src.p
    try:
        ar = ARCoefficients.from_values(*phi_sr, *phi_gg)
        innov = InnovationCov.from_values(g_sr[0], g_sr[1], g_sr[2], g_gg[0], g_gg[1])
        return SimulationDesign(A=A, T=T, p=p, beta=beta, ar=ar, innov=innov, rho_gg=rho,
                                family=fam, covariate_generator=generator, covariate_table=table,
                                missing_fraction=miss, covariate_names=names, sr_enabled=sr_on)
    except DesignInvalid:
        raise
    except (LSRMError, ValueError) as exc:
        raise DesignInvalid(str(exc)) from None


def truth_record(sim) -> dict:
    t = sim.truth
    rec = {
        "family": sim.panel.family,
        "beta": np.asarray(t.beta).tolist(),
        "phi_sr": np.asarray(t.ar.sr).tolist(),
        "phi_gg": [t.ar.phi_g, t.ar.phi_gg],
        "gamma_sr": np.asarray(t.innov.sr).tolist(),
        "gamma_gg": np.asarray(t.innov.gg).tolist(),
        "rho_gg": t.rho_gg,
        "sr_effects": np.asarray(t.sr_effects).tolist(),
        "actor_labels": list(sim.panel.actor_labels),
    }
    return rec


def simulate_to_dir(design: SimulationDesign, seed: int, out_dir) -> tuple:
    sim = simulate_panel(design, rng_stream(seed, 0))
    out = Path(out_dir)
    write_panel(sim.panel, out / "panel.csv")
    atomic_write_text(out / "panel.truth.json", json.dumps(truth_record(sim), indent=1) + "\n")
    return out / "panel.csv", out / "panel.truth.json"
