"""Configuration, ensembles, experiments, run records and the command line."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import REGISTRY, Check, ExperimentReport, run_experiment
from .records import RunRecord, write_record

__all__ = [
    "Check", "ConfigError", "ExperimentConfig", "ExperimentReport", "REGISTRY",
    "RunRecord", "load_config", "parse_config", "run_experiment", "write_record",
]
