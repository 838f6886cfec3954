"""Experiment configuration, presets, artifact writing and the CLI."""

from .config import ExperimentConfig, load_config, parse_config
from .presets import PRESETS, preset, preset_names
from .runner import complexity_report, evaluate, run_experiment, sample_diagnostics

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "complexity_report",
    "evaluate",
    "load_config",
    "parse_config",
    "preset",
    "preset_names",
    "run_experiment",
    "sample_diagnostics",
]
