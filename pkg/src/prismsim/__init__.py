"""Deterministic Prism consensus simulator with an account-based executor."""
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config
from .harness import MetricsRecord, bandwidth_breakdown, latency_bound, run_experiment

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MetricsRecord",
    "bandwidth_breakdown",
    "config_from_dict",
    "latency_bound",
    "load_config",
    "run_experiment",
]
