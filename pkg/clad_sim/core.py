"""
Core Experiment Runner

Main orchestrator class: loads device data, derives the client population for every
sweep value and seed, runs each configured algorithm, and writes result files.
"""

import logging
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from . import __version__
from .config import ExperimentConfig, SweepAxis
from .data.dataset import Dataset, apply_scaler, fit_scaler, load_csv, scan_labels
from .data.partition import ClientDataset, build_population, check_sample_budget
from .data.synthetic import synth_generate
from .evaluation.accounting import Algorithm
from .exceptions import DataError
from .federation.algorithms import ExperimentResult, run_experiment
from .generators.results_generator import ResultsGenerator, make_run_id
from .models.dm2a import DM2AConfig
from .nn.optim import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from .utils.file_manager import FileManager
from .utils.logger import add_file_handler, remove_handler
from .utils.seeding import combine_seeds

PACKAGE_LOGGER = "clad_sim"
LOG_FILE = "experiment.log"
METADATA_FILE = "metadata.json"


class ExperimentRunner:
    """
    Runs every (algorithm x sweep value x seed) combination of an ExperimentConfig.

    Results go to the configured output directory; runs are independent, so
    re-running an identical config reproduces every file except metadata.json.
    """

    def __init__(self, config: ExperimentConfig, output_dir: Optional[Path] = None):
        """
        Initialize the runner.

        Args:
            config: Validated experiment configuration
            output_dir: Overrides config.output_dir
        """
        config.validate()
        self.config = config
        self.output_dir = Path(output_dir) if output_dir else Path(config.output_dir)
        self.file_manager = FileManager(self.output_dir)
        self.results = ResultsGenerator(self.file_manager)
        self.logger = logging.getLogger(f"{__name__}.ExperimentRunner")

        self.devices: List[Dataset] = []
        self.model_config: Optional[DM2AConfig] = None
        self.client_sizes: Dict[str, Dict[int, int]] = {}

    def load_devices(self) -> List[Dataset]:
        """Device pools from CSV or the synthetic generator, min-max scaled per device if set."""
        source = self.config.dataset
        if source.csv is not None:
            csv = source.csv
            class_names = csv.class_names or scan_labels(
                csv.paths, csv.label_column, csv.benign_label
            )
            devices = [
                load_csv(path, csv.label_column, csv.benign_label, class_names)
                for path in csv.paths
            ]
            feature_sets = {d.feature_names for d in devices}
            if len(feature_sets) > 1:
                raise DataError("Device CSVs disagree on their feature columns")
        else:
            devices = synth_generate(source.synthetic)

        if source.per_device_scaling:
            devices = [apply_scaler(d, fit_scaler(d)) for d in devices]
        sweep = self.config.sweep
        check_sample_budget(devices, [sweep.apply(self.config.partition, v) for v in sweep.values])
        self.devices = devices
        self.model_config = self.config.model.resolve(
            devices[0].feature_dim, devices[0].class_count
        )
        self.logger.info(
            f"Loaded {len(devices)} devices ({source.kind}), {devices[0].feature_dim} features, "
            f"{devices[0].class_count} classes"
        )
        return devices

    def build_clients(self, sweep_value: Any, seed: int) -> List[ClientDataset]:
        """Client population for one sweep value; partition randomness follows the run seed."""
        spec = self.config.sweep.apply(self.config.partition, sweep_value)
        spec = replace(spec, seed=combine_seeds(spec.seed, seed))
        return build_population(self.devices, spec, alpha=self.model_config.alpha_default)

    def run_one(
        self, algorithm: Algorithm, clients: List[ClientDataset], seed: int
    ) -> ExperimentResult:
        return run_experiment(
            algorithm,
            clients,
            self.config.training,
            self.config.K,
            seed,
            self.model_config,
            workers=self.config.workers,
        )

    def run(self) -> Dict[str, Any]:
        """
        Execute the whole experiment.

        Returns:
            Dictionary with the run ids, output directory and files written
        """
        package_logger = logging.getLogger(PACKAGE_LOGGER)
        previous_level = package_logger.level
        handler = add_file_handler(package_logger, self.output_dir / LOG_FILE)
        started = datetime.now(timezone.utc)
        try:
            return self._run(started)
        except Exception as e:
            self.logger.error(f"Experiment failed: {e}")
            raise
        finally:
            remove_handler(package_logger, handler)
            package_logger.setLevel(previous_level)

    def _run(self, started: datetime) -> Dict[str, Any]:
        config = self.config
        self.logger.info(
            f"Experiment '{config.name}': {', '.join(a.value for a in config.algorithms)}; "
            f"K={config.K}; seeds {list(config.seeds)}; sweep {config.sweep.axis.value}"
        )
        self.load_devices()

        axis = config.sweep.axis.value
        run_ids: List[str] = []
        for value in config.sweep.values:
            for seed in config.seeds:
                clients = self.build_clients(value, seed)
                truth = {c.client_id: c.device_id for c in clients}
                for algorithm in config.algorithms:
                    run_id = make_run_id(algorithm.value, axis, value, seed)
                    self.logger.info(f"Run {run_id}: {len(clients)} clients")
                    result = self.run_one(algorithm, clients, seed)
                    sweep_value = None if config.sweep.axis == SweepAxis.NONE else value
                    self.results.write_run(run_id, result, seed, truth, axis, sweep_value)
                    self.client_sizes[run_id] = result.client_sizes
                    run_ids.append(run_id)

        summary = self.results.write_summary()
        metadata_path = self.file_manager.save_json(
            self._metadata(started, run_ids), METADATA_FILE
        )
        self.logger.info(f"Experiment finished: {len(run_ids)} runs in {self.output_dir}")
        return {
            "output_directory": str(self.output_dir),
            "run_ids": run_ids,
            "summary_rows": 0 if summary is None else len(summary),
            "metadata": str(metadata_path),
        }

    def _metadata(self, started: datetime, run_ids: List[str]) -> Dict[str, Any]:
        return {
            "name": self.config.name,
            "package_version": __version__,
            "started_at": started.isoformat(),
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "config_file": str(self.config.source_path) if self.config.source_path else None,
            "config": self.config.to_dict(),
            "model": self.model_config.to_dict() if self.model_config else None,
            "optimizer": {
                "name": "adamw",
                "beta1": ADAM_BETA1,
                "beta2": ADAM_BETA2,
                "eps": ADAM_EPS,
                "learning_rate": self.config.training.learning_rate,
                "weight_decay": self.config.training.weight_decay,
            },
            "runs": run_ids,
            "client_train_sizes": {
                run_id: {str(cid): n for cid, n in sizes.items()}
                for run_id, sizes in self.client_sizes.items()
            },
        }


def summarize(results: Dict[str, Any]) -> List[Tuple[str, str]]:
    """Label/value pairs for the CLI summary."""
    return [
        ("Output directory", results["output_directory"]),
        ("Runs", str(len(results["run_ids"]))),
        ("Summary rows", str(results["summary_rows"])),
        ("Metadata", results["metadata"]),
    ]
