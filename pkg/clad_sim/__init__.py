"""
CLAD Simulator

A deterministic, desk-scale simulator of clustered federated learning for joint network
anomaly detection and attack classification on heterogeneous IoT devices.

Key Features:
- Dual-mode model: shared encoder with reconstruction and classification heads
- Loss-vector client clustering with minimum-cost cluster/model matching
- FedAvg, IFCA, CFL-AD and local-training baselines
- IID, Dirichlet and as-is client partitioning, with unlabeled clients
- Byte-exact communication and FLOP accounting, budget snapshots

Usage:
    from clad_sim import ExperimentRunner, load_config

    runner = ExperimentRunner(load_config("experiment.yaml"))
    runner.run()
"""

__version__ = "0.1.0"
__description__ = "Clustered federated anomaly detection and attack classification simulator"

from .config import ExperimentConfig, load_config, parse_config
from .core import ExperimentRunner
from .federation import run_experiment
from .generators import ReportGenerator, ResultsGenerator

__all__ = [
    "ExperimentConfig",
    "ExperimentRunner",
    "ReportGenerator",
    "ResultsGenerator",
    "load_config",
    "parse_config",
    "run_experiment",
]
