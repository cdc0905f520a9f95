"""
Experiment Configuration

One YAML file describes an experiment, in the sections experiment, dataset, model,
partition, training, sweep and output. Parsing collects every field-level problem
(named by key path, e.g. ``partition.benign_fraction``) before raising.

Example:
    experiment:
      name: cic-heterogeneity
      algorithms: [clad, fedavg, local]
      K: 5
      seeds: [0, 1, 2]
    dataset:
      csv:
        paths: [data/device_0.csv, data/device_1.csv]
        label_column: label
    model:
      preset: cic
    partition:
      clients_per_device: 5
      samples_per_client: 1000
    training:
      max_rounds: 100
    sweep:
      axis: benign_fraction
      values: [0.2, 0.5, 0.8, 0.95]
    output:
      directory: results/cic
"""

import logging
import os
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import yaml

from .data.dataset import BENIGN_LABEL
from .data.partition import PartitionMode, PartitionSpec, sample_shortfall
from .data.synthetic import SyntheticSpec
from .evaluation.accounting import Algorithm
from .exceptions import ConfigurationError, MissingFileError
from .federation.client import TrainHyper
from .models.dm2a import DM2AConfig, dm2a_preset

OUTPUT_DIR_ENV = "CLAD_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "clad_results"
SECTIONS = ("experiment", "dataset", "model", "partition", "training", "sweep", "output")

logger = logging.getLogger(__name__)


class SweepAxis(str, Enum):
    NONE = "none"
    BENIGN_FRACTION = "benign_fraction"
    DIRICHLET_BETA = "dirichlet_beta"
    UNLABELED_FRACTION = "unlabeled_fraction"
    SAMPLES_PER_CLIENT = "samples_per_client"
    CLIENTS_PER_DEVICE = "clients_per_device"


DEFAULT_SWEEP_VALUES = {
    SweepAxis.BENIGN_FRACTION: (0.2, 0.5, 0.8, 0.95),
    SweepAxis.DIRICHLET_BETA: (0.1, 0.25, 0.5, 1.0),
    SweepAxis.UNLABELED_FRACTION: (0.2, 0.4, 0.6, 0.8),
}

_INTEGER_AXES = (SweepAxis.SAMPLES_PER_CLIENT, SweepAxis.CLIENTS_PER_DEVICE)


@dataclass
class SweepSpec:
    """One partition parameter varied over a list of values; axis none means a single run group."""

    axis: SweepAxis = SweepAxis.NONE
    values: Tuple[Any, ...] = (None,)

    def __post_init__(self):
        self.axis = SweepAxis(self.axis)
        if self.axis == SweepAxis.NONE:
            self.values = (None,)
        else:
            self.values = tuple(self.values)

    def problems(self) -> List[str]:
        if self.axis == SweepAxis.NONE:
            return []
        issues = []
        if not self.values:
            issues.append(f"values must list at least one {self.axis.value}")
        for value in self.values:
            if self.axis in _INTEGER_AXES and (not isinstance(value, int) or value < 1):
                issues.append(f"values: {self.axis.value} must be a positive integer (got {value})")
            elif not isinstance(value, (int, float)):
                issues.append(f"values: {self.axis.value} must be numeric (got {value!r})")
        return issues

    def apply(self, spec: PartitionSpec, value: Any) -> PartitionSpec:
        """Partition spec with the swept parameter set to value."""
        if self.axis == SweepAxis.NONE:
            return spec
        if self.axis == SweepAxis.DIRICHLET_BETA:
            return replace(spec, dirichlet_beta=float(value), mode=PartitionMode.DIRICHLET)
        cast = int if self.axis in _INTEGER_AXES else float
        return replace(spec, **{self.axis.value: cast(value)})

    def to_dict(self) -> Dict[str, Any]:
        return {"axis": self.axis.value, "values": list(self.values)}


@dataclass
class CsvSource:
    """One featurized CSV per physical device."""

    paths: Tuple[Path, ...]
    label_column: str = "label"
    benign_label: str = BENIGN_LABEL
    class_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        self.paths = tuple(Path(p) for p in self.paths)
        if self.class_names is not None:
            self.class_names = tuple(self.class_names)

    def problems(self) -> List[str]:
        issues = []
        if not self.paths:
            issues.append("paths must list at least one device CSV")
        for i, path in enumerate(self.paths):
            if not path.exists():
                issues.append(f"paths[{i}]: file not found: {path}")
        if self.class_names is not None and self.class_names[:1] != (self.benign_label,):
            issues.append(f"class_names must start with the benign label '{self.benign_label}'")
        return issues


@dataclass
class DatasetSource:
    """Exactly one of csv / synthetic."""

    csv: Optional[CsvSource] = None
    synthetic: Optional[SyntheticSpec] = None
    scale: Optional[bool] = None

    @property
    def kind(self) -> str:
        return "csv" if self.csv is not None else "synthetic"

    @property
    def per_device_scaling(self) -> bool:
        """CSV devices are min-max scaled per device unless disabled; synthetic data is not."""
        if self.scale is not None:
            return bool(self.scale)
        return self.csv is not None

    def problems(self) -> List[str]:
        if (self.csv is None) == (self.synthetic is None):
            return ["exactly one of dataset.csv or dataset.synthetic must be given"]
        if self.csv is not None:
            return [f"csv.{p}" for p in self.csv.problems()]
        return [f"synthetic.{p}" for p in self.synthetic.problems()]

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"scale": self.per_device_scaling}
        if self.csv is not None:
            data["csv"] = {
                "paths": [str(p) for p in self.csv.paths],
                "label_column": self.csv.label_column,
                "benign_label": self.csv.benign_label,
                "class_names": list(self.csv.class_names) if self.csv.class_names else None,
            }
        else:
            data["synthetic"] = self.synthetic.to_dict()
        return data


@dataclass
class ModelSpec:
    """Model section: an optional preset plus explicit DM2AConfig fields that override it."""

    preset: Optional[str] = None
    overrides: Dict[str, Any] = field(default_factory=dict)

    def resolve(self, input_dim: int, num_classes: int) -> DM2AConfig:
        """
        DM2AConfig for data with input_dim features and num_classes classes.

        Raises:
            ConfigurationError: explicit dimensions disagree with the data
        """
        params = dict(self.overrides)
        for key, actual in (("input_dim", input_dim), ("num_classes", num_classes)):
            if key in params and int(params[key]) != actual:
                raise ConfigurationError(
                    "Model does not fit the data",
                    [f"model.{key} is {params[key]} but the dataset has {actual}"],
                )
            params[key] = actual
        if self.preset is not None:
            config = dm2a_preset(self.preset, **params)
        else:
            config = DM2AConfig(**params)
        return config

    def to_dict(self) -> Dict[str, Any]:
        data = dict(self.overrides)
        if self.preset is not None:
            data["preset"] = self.preset
        return data


@dataclass
class ExperimentConfig:
    name: str
    algorithms: Tuple[Algorithm, ...]
    K: int
    seeds: Tuple[int, ...]
    dataset: DatasetSource
    model: ModelSpec
    partition: PartitionSpec
    training: TrainHyper
    sweep: SweepSpec = field(default_factory=SweepSpec)
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    workers: int = 1
    source_path: Optional[Path] = None

    def problems(self, check_budget: bool = True) -> List[str]:
        issues = []
        if not self.algorithms:
            issues.append("experiment.algorithms: list at least one algorithm")
        if self.K < 1:
            issues.append(f"experiment.K: must be at least 1 (got {self.K})")
        if not self.seeds:
            issues.append("experiment.seeds: must list at least one seed")
        if self.workers < 1:
            issues.append(f"experiment.workers: must be at least 1 (got {self.workers})")
        issues.extend(f"dataset.{p}" for p in self.dataset.problems())
        issues.extend(_keyed("partition", self.partition.problems(), PartitionSpec))
        issues.extend(_keyed("training", self.training.problems(), TrainHyper))
        issues.extend(f"sweep.{p}" for p in self.sweep.problems())
        if self.sweep.axis != SweepAxis.NONE:
            for value in self.sweep.values:
                try:
                    swept = self.sweep.apply(self.partition, value)
                    issues.extend(f"sweep.values: {p}" for p in swept.problems())
                except (TypeError, ValueError) as e:
                    issues.append(f"sweep.values: {e}")
        if check_budget and not issues:
            issues.extend(_sample_budget_problems(self))
        return issues

    def validate(self) -> None:
        issues = self.problems()
        if issues:
            raise ConfigurationError("Invalid experiment configuration", issues)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "experiment": {
                "name": self.name,
                "algorithms": [a.value for a in self.algorithms],
                "K": self.K,
                "seeds": list(self.seeds),
                "workers": self.workers,
            },
            "dataset": self.dataset.to_dict(),
            "model": self.model.to_dict(),
            "partition": self.partition.to_dict(),
            "training": self.training.to_dict(),
            "sweep": self.sweep.to_dict(),
            "output": {"directory": str(self.output_dir)},
        }


def _keyed(section: str, problems: Sequence[str], cls) -> List[str]:
    """Prefix each problem with its key path when it starts with a field name."""
    names = {f.name for f in fields(cls)}
    keyed = []
    for problem in problems:
        if problem.startswith(f"{section}."):
            keyed.append(problem)
            continue
        head = problem.split(" ", 1)[0]
        keyed.append(f"{section}.{head}: {problem}" if head in names else f"{section}: {problem}")
    return keyed


def _integer(value: Any, key: str, problems: List[str]) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        problems.append(f"{key}: must be an integer (got {value!r})")
        return 1
    return value


def _section(raw: Dict[str, Any], name: str, problems: List[str]) -> Dict[str, Any]:
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        problems.append(f"{name}: must be a mapping (got {type(value).__name__})")
        return {}
    return value


def _build(cls, section: str, values: Dict[str, Any], problems: List[str]):
    """Instantiate a dataclass from a mapping, reporting unknown keys and bad values."""
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - names)
    for key in unknown:
        problems.append(f"{section}.{key}: unknown key")
    try:
        return cls(**{k: v for k, v in values.items() if k in names})
    except ConfigurationError as e:
        problems.extend(_keyed(section, e.problems or [str(e)], cls))
    except (TypeError, ValueError) as e:
        problems.append(f"{section}: {e}")
    return None


def _resolve_path(path: Union[str, Path], base_dir: Optional[Path]) -> Path:
    path = Path(path)
    if not path.is_absolute() and base_dir is not None:
        return base_dir / path
    return path


def _parse_dataset(
    section: Dict[str, Any], base_dir: Optional[Path], problems: List[str]
) -> DatasetSource:
    source = DatasetSource(scale=section.get("scale"))
    for key in sorted(set(section) - {"csv", "synthetic", "scale"}):
        problems.append(f"dataset.{key}: unknown key")
    if "csv" in section:
        csv = dict(section["csv"] or {})
        csv["paths"] = [_resolve_path(p, base_dir) for p in csv.get("paths") or []]
        source.csv = _build(CsvSource, "dataset.csv", csv, problems)
    if "synthetic" in section:
        source.synthetic = _build(
            SyntheticSpec, "dataset.synthetic", dict(section["synthetic"] or {}), problems
        )
    return source


def _parse_model(section: Dict[str, Any], problems: List[str]) -> ModelSpec:
    names = {f.name for f in fields(DM2AConfig)}
    overrides = {k: v for k, v in section.items() if k != "preset"}
    for key in sorted(set(overrides) - names):
        problems.append(f"model.{key}: unknown key")
        overrides.pop(key)
    preset = section.get("preset")
    if preset is None and "encoder_widths" not in overrides:
        problems.append("model.encoder_widths: required when no preset is given")
    return ModelSpec(preset=preset, overrides=overrides)


def _parse_algorithms(section: Dict[str, Any], problems: List[str]) -> Tuple[Algorithm, ...]:
    raw = section.get("algorithms", section.get("algorithm", [Algorithm.CLAD.value]))
    if isinstance(raw, str):
        raw = [raw]
    algorithms = []
    for name in raw:
        try:
            algorithms.append(Algorithm(str(name).lower()))
        except ValueError:
            choices = ", ".join(a.value for a in Algorithm)
            problems.append(f"experiment.algorithms: unknown algorithm '{name}' ({choices})")
    return tuple(dict.fromkeys(algorithms))


def _parse_sweep(section: Dict[str, Any], problems: List[str]) -> SweepSpec:
    try:
        axis = SweepAxis(section.get("axis", SweepAxis.NONE.value))
    except ValueError:
        choices = ", ".join(a.value for a in SweepAxis)
        problems.append(f"sweep.axis: unknown axis '{section.get('axis')}' ({choices})")
        return SweepSpec()
    values = section.get("values")
    if values is None:
        if axis not in DEFAULT_SWEEP_VALUES and axis != SweepAxis.NONE:
            problems.append(f"sweep.values: required for axis {axis.value}")
            return SweepSpec()
        values = DEFAULT_SWEEP_VALUES.get(axis, (None,))
    return SweepSpec(axis, tuple(values))


def parse_config(raw: Dict[str, Any], base_dir: Optional[Path] = None) -> ExperimentConfig:
    """
    Build and validate an ExperimentConfig from a parsed YAML mapping.

    Args:
        raw: Mapping with the config sections
        base_dir: Directory that relative dataset paths are resolved against

    Raises:
        ConfigurationError: listing every problem found
    """
    problems: List[str] = []
    if not isinstance(raw, dict):
        raise ConfigurationError("Configuration must be a mapping of sections")
    for key in sorted(set(raw) - set(SECTIONS)):
        problems.append(f"{key}: unknown section")

    experiment = _section(raw, "experiment", problems)
    seeds = experiment.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]

    output = _section(raw, "output", problems)
    output_dir = Path(
        os.environ.get(OUTPUT_DIR_ENV) or output.get("directory") or DEFAULT_OUTPUT_DIR
    )

    config = ExperimentConfig(
        name=str(experiment.get("name", "experiment")),
        algorithms=_parse_algorithms(experiment, problems),
        K=_integer(experiment.get("K", 1), "experiment.K", problems),
        seeds=tuple(_integer(s, "experiment.seeds", problems) for s in seeds),
        dataset=_parse_dataset(_section(raw, "dataset", problems), base_dir, problems),
        model=_parse_model(_section(raw, "model", problems), problems),
        partition=_build(PartitionSpec, "partition", _section(raw, "partition", problems), problems)
        or PartitionSpec(),
        training=_build(TrainHyper, "training", _section(raw, "training", problems), problems)
        or TrainHyper(),
        sweep=_parse_sweep(_section(raw, "sweep", problems), problems),
        output_dir=output_dir,
        workers=_integer(experiment.get("workers", 1), "experiment.workers", problems),
    )
    problems.extend(config.problems(check_budget=not problems))
    problems.extend(_model_problems(config))
    if problems:
        raise ConfigurationError("Invalid experiment configuration", list(dict.fromkeys(problems)))
    return config


def _model_problems(config: ExperimentConfig) -> List[str]:
    """Check the model section against the data when the data shape is known up front."""
    spec = config.model
    synthetic = config.dataset.synthetic
    if synthetic is not None and config.dataset.csv is None:
        input_dim, num_classes = synthetic.feature_dim, synthetic.num_classes
    else:
        input_dim = spec.overrides.get("input_dim")
        num_classes = spec.overrides.get("num_classes")
        if input_dim is None or num_classes is None:
            return []
    try:
        spec.resolve(int(input_dim), int(num_classes))
    except ConfigurationError as e:
        return _keyed("model", e.problems or [str(e)], DM2AConfig)
    except (TypeError, ValueError) as e:
        return [f"model: {e}"]
    return []


def _sample_budget_problems(config: ExperimentConfig) -> List[str]:
    """Check every swept partition against the per-class pool of a synthetic device."""
    synthetic = config.dataset.synthetic
    if synthetic is None or config.dataset.csv is not None:
        return []
    pool = [synthetic.samples_per_class] * synthetic.num_classes
    issues = []
    for value in config.sweep.values:
        spec = config.sweep.apply(config.partition, value)
        key = "partition" if config.sweep.axis == SweepAxis.NONE else "sweep.values"
        where = "" if value is None else f" at {config.sweep.axis.value}={value}"
        for c, short in sorted(sample_shortfall(spec, pool).items()):
            what = "samples" if c < 0 else f"class-{c} samples"
            issues.append(
                f"{key}: each device is short by {short} {what}{where} "
                f"({spec.clients_per_device} clients x {spec.samples_per_client} samples; "
                f"dataset.synthetic.samples_per_class is {synthetic.samples_per_class})"
            )
    return issues


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate a YAML experiment config."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Cannot parse {path}: {e}") from e
    config = parse_config(raw, base_dir=path.parent)
    config.source_path = path
    logger.debug(f"Loaded config {path}: {config.name}")
    return config


def load_synthetic_spec(path: Union[str, Path]) -> SyntheticSpec:
    """Synthetic spec from a YAML file holding either the bare spec or a full config."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"Spec file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    if isinstance(raw, dict) and "dataset" in raw:
        raw = (raw.get("dataset") or {}).get("synthetic") or {}
    problems: List[str] = []
    spec = _build(SyntheticSpec, "synthetic", dict(raw), problems)
    if spec is not None:
        problems.extend(f"synthetic.{p}" for p in spec.problems())
    if problems:
        raise ConfigurationError(f"Invalid synthetic spec in {path}", problems)
    return spec
