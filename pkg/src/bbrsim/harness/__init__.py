"""Scenario tables, experiment runners and the command-line front end."""

from .experiments import (
    ConfigError,
    ExperimentConfig,
    load_config,
    resolve_config,
    run_experiment,
    run_inter_protocol,
    run_intra_fairness,
    run_responsiveness,
    run_rtt_unfairness,
    run_utilization,
)

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "resolve_config", "run_experiment",
           "run_inter_protocol", "run_intra_fairness", "run_responsiveness", "run_rtt_unfairness",
           "run_utilization"]
