"""Experiment configuration, sweeps and the command line interface."""
from .config import ConfigError, ExperimentConfig, parse_config
from .experiments import CSV_COLUMNS, EXPERIMENTS, run_experiment, write_csv

__all__ = ["CSV_COLUMNS", "ConfigError", "EXPERIMENTS", "ExperimentConfig", "parse_config",
           "run_experiment", "write_csv"]
