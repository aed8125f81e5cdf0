"""Experiment harness: configs, runner, reports and plots."""
from .config import ConfigError, ExperimentConfig
from .runner import HEADER, STRATEGY_HEADER, RunReport, run_experiment

__all__ = ["ConfigError", "ExperimentConfig", "HEADER", "STRATEGY_HEADER", "RunReport", "run_experiment"]
