"""Experiment harness: configs, scenario runners, CSV rows and the CLI."""

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, UnknownExperiment, load_config
from .experiments import NumericalError, nominal_aoa_grid, peak_map_linear, run_experiment
from .results import COLUMNS, ResultRow, parse_csv, read_csv, rows_to_csv, write_csv

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "UnknownExperiment",
    "ExperimentConfig",
    "load_config",
    "NumericalError",
    "nominal_aoa_grid",
    "peak_map_linear",
    "run_experiment",
    "COLUMNS",
    "ResultRow",
    "parse_csv",
    "read_csv",
    "rows_to_csv",
    "write_csv",
]
