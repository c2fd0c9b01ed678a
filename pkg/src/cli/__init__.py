"""
Command-line interface and experiment orchestration
"""

from src.cli.experiment import Experiment, ExperimentConfig, load_experiment
from src.cli.main import build_parser, main

__all__ = ["Experiment", "ExperimentConfig", "build_parser", "load_experiment", "main"]
