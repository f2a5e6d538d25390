"""
CosDefense Federated-Learning Simulator

This package simulates federated training under untargeted poisoning
attacks and evaluates CosDefense against Krum, Multi-Krum, coordinate-wise
median and Clipping-Median.
"""

__version__ = "0.1.0"

from .data_loader import DataLoader, Dataset
from .defenses import RobustAggregator, cos_defense_filter
from .experiment_config import ExperimentConfig
from .experiment_runner import parse_config, run_experiment, run_sweep
from .fl_core import FederatedSimulator

__all__ = [
    "DataLoader",
    "Dataset",
    "ExperimentConfig",
    "FederatedSimulator",
    "RobustAggregator",
    "cos_defense_filter",
    "parse_config",
    "run_experiment",
    "run_sweep",
]
