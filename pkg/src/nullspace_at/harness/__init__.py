"""Experiment harness: datasets, evaluation, config-driven runs, CLI."""

from .data import Dataset, load_idx_subset, make_blobs
from .evaluation import EvalReport, LandscapeGrid, evaluate, landscape
from .experiment import (ConfigError, load_config, run_experiment,
                         run_pipeline, validate_config)

__all__ = [
    "ConfigError",
    "Dataset",
    "EvalReport",
    "LandscapeGrid",
    "evaluate",
    "landscape",
    "load_config",
    "load_idx_subset",
    "make_blobs",
    "run_experiment",
    "run_pipeline",
    "validate_config",
]
