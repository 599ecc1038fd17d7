"""Multi-fidelity Bayesian optimization with stacked Bayesian-output networks."""

__version__ = "0.1.0"

from stackbo._backend import BACKEND
from stackbo.acquisition import (
    CostModel,
    MaxValueSamples,
    maximize_acquisition,
    mutual_info,
    sample_max_values,
    truncated_entropy_lower,
    truncated_entropy_top,
)
from stackbo.beliefs import GaussianBelief, conditional_posterior_chain, output_posteriors
from stackbo.benchmarks import BlackBoxTask, make_task, register_task
from stackbo.engine import ExperimentConfig, RunTrace, TraceRecord, bo_run, inference_regret, simple_regret
from stackbo.harness import ConfigError, RunManifest, emit_regret_curve, parse_config, run_experiment, serialize_config
from stackbo.nn import NetworkArchitecture
from stackbo.optim import AdamConfig, BoxDomain, LbfgsConfig
from stackbo.quadrature import gauss_hermite_rule, gaussian_expectation
from stackbo.surrogate import Dataset, MultiFidelityModel, build_model, elbo_estimate, load_model, save_model, train

__all__ = [
    "BACKEND",
    "AdamConfig",
    "BlackBoxTask",
    "BoxDomain",
    "ConfigError",
    "CostModel",
    "Dataset",
    "ExperimentConfig",
    "GaussianBelief",
    "LbfgsConfig",
    "MaxValueSamples",
    "MultiFidelityModel",
    "NetworkArchitecture",
    "RunManifest",
    "RunTrace",
    "TraceRecord",
    "bo_run",
    "build_model",
    "conditional_posterior_chain",
    "elbo_estimate",
    "emit_regret_curve",
    "gauss_hermite_rule",
    "gaussian_expectation",
    "inference_regret",
    "load_model",
    "make_task",
    "maximize_acquisition",
    "mutual_info",
    "output_posteriors",
    "parse_config",
    "register_task",
    "run_experiment",
    "sample_max_values",
    "save_model",
    "serialize_config",
    "simple_regret",
    "train",
    "truncated_entropy_lower",
    "truncated_entropy_top",
]
