"""Bayesian longitudinal social relations models for directed dyadic panels."""
from .errors import *  # noqa: F401,F403
from .gaussian import SUBMODELS, ModelStructure, SamplerConfig, run_chain
from .model import (
    ARCoefficients,
    DyadPanel,
    InnovationCov,
    ModelParameters,
    derived_covariances,
    linear_predictor,
    probit_innovation_from,
    stationary_blocks,
    wong_inverse,
    wong_transform,
)
from .posterior import PosteriorChain, derived_posterior, effective_sample_size, summarize, trace_export
from .priors import PriorSpec, log_prior
from .probit import run_chain_probit
from .simulate import SimulationDesign, simulate_effects, simulate_panel

__version__ = "0.1.0"
