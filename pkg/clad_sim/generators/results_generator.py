"""
Results Generator

Turns ExperimentResults into the per-run CSV files (result rows, cost ledger, cluster
assignments) and the across-seed summary table.
"""

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..evaluation.accounting import Algorithm, CostLedger
from ..federation.algorithms import ExperimentResult
from ..utils.file_manager import FileManager

RUNS_DIR = "runs"
SUMMARY_FILE = "summary.csv"
SUMMARY_METRICS = (
    "cls_f1",
    "cls_acc",
    "ad_f1",
    "mcc",
    "ad_f1_classifier",
    "ad_f1_threshold",
    "assignment_purity",
    "cumulative_bytes",
    "cumulative_flops",
)
_UNIT_METRICS = (
    "cls_f1",
    "cls_acc",
    "ad_f1",
    "ad_f1_classifier",
    "ad_f1_threshold",
    "assignment_purity",
)


@dataclass
class ResultRow:
    """One (algorithm, sweep value, seed, round) line of a run file."""

    run_id: str
    algorithm: str
    sweep_axis: str
    sweep_value: float
    seed: int
    round: int
    phase: str
    cumulative_bytes: float
    cumulative_flops: float
    cls_f1: float
    cls_acc: float
    ad_f1: float
    mcc: float
    ad_f1_classifier: float
    ad_f1_threshold: float
    assignment_purity: float
    stabilized: bool

    def __post_init__(self):
        for name in _UNIT_METRICS:
            value = getattr(self, name)
            if not math.isnan(value) and not 0.0 <= value <= 1.0:
                raise ValueError(f"{self.run_id} round {self.round}: {name}={value} outside [0, 1]")
        if not math.isnan(self.mcc) and not -1.0 <= self.mcc <= 1.0:
            raise ValueError(f"{self.run_id} round {self.round}: mcc={self.mcc} outside [-1, 1]")


RESULT_COLUMNS = tuple(f.name for f in fields(ResultRow))


def make_run_id(algorithm: str, sweep_axis: str, sweep_value: Optional[float], seed: int) -> str:
    """e.g. clad__benign_fraction-0.5__seed0, or clad__seed0 without a sweep."""
    if sweep_value is None or sweep_axis == "none":
        return f"{algorithm}__seed{seed}"
    return f"{algorithm}__{sweep_axis}-{sweep_value}__seed{seed}"


def rows_from_result(
    run_id: str,
    result: ExperimentResult,
    seed: int,
    sweep_axis: str = "none",
    sweep_value: Optional[float] = None,
) -> List[ResultRow]:
    rows = []
    for expected, log in enumerate(result.logs):
        if log.round != expected:
            raise ValueError(f"{run_id}: round {log.round} found where {expected} was expected")
        metrics = log.metrics
        rows.append(
            ResultRow(
                run_id=run_id,
                algorithm=Algorithm(result.algorithm).value,
                sweep_axis=sweep_axis,
                sweep_value=float("nan") if sweep_value is None else float(sweep_value),
                seed=int(seed),
                round=log.round,
                phase=log.phase.value,
                cumulative_bytes=float(log.cumulative_bytes),
                cumulative_flops=float(log.cumulative_flops),
                cls_f1=metrics["cls_f1"],
                cls_acc=metrics["cls_acc"],
                ad_f1=metrics["ad_f1"],
                mcc=metrics["mcc"],
                ad_f1_classifier=metrics["ad_f1_classifier"],
                ad_f1_threshold=metrics["ad_f1_threshold"],
                assignment_purity=metrics["assignment_purity"],
                stabilized=bool(log.stabilized),
            )
        )
    return rows


def rows_frame(rows: Sequence[ResultRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in rows], columns=list(RESULT_COLUMNS))


def ledger_frame(ledger: CostLedger) -> pd.DataFrame:
    """Per round: mean per-client cumulative cost, then every client's own totals."""
    records = []
    for snap in ledger.snapshots:
        record = {
            "round": snap.round,
            "phase": snap.phase.value,
            "mean_bytes": snap.mean_bytes,
            "mean_flops": snap.mean_flops,
        }
        for cid in ledger.client_ids:
            record[f"bytes_c{cid}"] = snap.download[cid] + snap.upload[cid]
        for cid in ledger.client_ids:
            record[f"flops_c{cid}"] = snap.flops[cid]
        records.append(record)
    return pd.DataFrame.from_records(records)


def assignments_frame(result: ExperimentResult, truth: Dict[int, int]) -> pd.DataFrame:
    """Long table of client -> cluster per round, with the ground-truth device alongside."""
    records = [
        {
            "round": log.round,
            "client_id": cid,
            "device_id": truth.get(cid, -1),
            "cluster": cluster,
        }
        for log in result.logs
        for cid, cluster in sorted(log.assignment.items())
    ]
    return pd.DataFrame(records, columns=["round", "client_id", "device_id", "cluster"])


def summary_frame(rows: pd.DataFrame) -> pd.DataFrame:
    """
    Final-round metrics aggregated across seeds: mean and sample std (n - 1) for each
    algorithm x sweep value. A single seed leaves std empty.
    """
    if rows.empty:
        return pd.DataFrame()
    keys = ["algorithm", "sweep_axis", "sweep_value"]
    finals = rows.loc[rows.groupby("run_id", sort=False)["round"].idxmax()]
    grouped = finals.groupby(keys, dropna=False, sort=True)
    summary = grouped.size().rename("n_seeds").to_frame()
    summary["rounds"] = grouped["round"].max()
    for metric in SUMMARY_METRICS:
        summary[f"{metric}_mean"] = grouped[metric].mean()
        summary[f"{metric}_std"] = grouped[metric].std(ddof=1)
    summary["stabilized_fraction"] = grouped["stabilized"].mean()
    return summary.reset_index()


class ResultsGenerator:
    """
    Writes result files for one experiment directory.

    This class creates:
    - runs/<run_id>.csv with one ResultRow per round
    - runs/<run_id>.ledger.csv with cumulative costs per round
    - runs/<run_id>.assignments.csv for clustered algorithms
    - summary.csv across all runs
    """

    def __init__(self, file_manager: FileManager):
        self.file_manager = file_manager
        self.logger = logging.getLogger(f"{__name__}")
        self.rows: List[ResultRow] = []

    def write_run(
        self,
        run_id: str,
        result: ExperimentResult,
        seed: int,
        truth: Dict[int, int],
        sweep_axis: str = "none",
        sweep_value: Optional[float] = None,
    ) -> List[ResultRow]:
        rows = rows_from_result(run_id, result, seed, sweep_axis, sweep_value)
        self.file_manager.save_csv(rows_frame(rows), f"{run_id}.csv", RUNS_DIR)
        self.file_manager.save_csv(ledger_frame(result.ledger), f"{run_id}.ledger.csv", RUNS_DIR)
        if Algorithm(result.algorithm).clustered:
            self.file_manager.save_csv(
                assignments_frame(result, truth), f"{run_id}.assignments.csv", RUNS_DIR
            )
        self.rows.extend(rows)
        self.logger.info(f"Wrote {len(rows)} rows for run {run_id}")
        return rows

    def write_summary(self) -> Optional[pd.DataFrame]:
        if not self.rows:
            self.logger.warning("No result rows; summary not written")
            return None
        summary = summary_frame(rows_frame(self.rows))
        self.file_manager.save_csv(summary, SUMMARY_FILE)
        return summary


def load_run_rows(file_manager: FileManager) -> pd.DataFrame:
    """Every runs/<run_id>.csv under an experiment directory, concatenated in name order."""
    paths = [
        p
        for p in file_manager.list_files("*.csv", RUNS_DIR)
        if not p.name.endswith((".ledger.csv", ".assignments.csv"))
    ]
    if not paths:
        return pd.DataFrame(columns=list(RESULT_COLUMNS))
    frames = [pd.read_csv(p, encoding="utf-8") for p in paths]
    rows = pd.concat(frames, ignore_index=True)
    rows["sweep_value"] = rows["sweep_value"].astype(np.float64)
    return rows
