"""
Report Generator

Reads the run files of an experiment directory and emits plot-ready tables: metric
curves against round, bytes and FLOPs, and snapshots of every algorithm's metrics at
fixed communication or computation budgets, with relative gains over the best other
algorithm.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..evaluation.accounting import Budget, Resource, last_within_budget, parse_budget
from ..utils.file_manager import FileManager
from .results_generator import load_run_rows

CURVES_DIR = "curves"
BUDGET_FILE = "budget_snapshot.csv"
CURVE_METRICS = (
    "cls_f1",
    "cls_acc",
    "ad_f1",
    "mcc",
    "ad_f1_classifier",
    "ad_f1_threshold",
    "assignment_purity",
)
SNAPSHOT_METRICS = ("cls_f1", "ad_f1", "mcc")


def relative_gain(ours: float, best: float) -> float:
    """(ours - best) / best; NaN when best is zero or missing."""
    if best is None or np.isnan(best) or best == 0:
        return float("nan")
    return (ours - best) / best


def curve_frame(rows: pd.DataFrame) -> pd.DataFrame:
    """Across-seed means per sweep value and round, for one algorithm and sweep axis."""
    keys = ["sweep_value", "round"]
    grouped = rows.groupby(keys, dropna=False, sort=True)
    curve = grouped.size().rename("n_seeds").to_frame()
    curve["cumulative_bytes"] = grouped["cumulative_bytes"].mean()
    curve["cumulative_mib"] = curve["cumulative_bytes"] / (1024 * 1024)
    curve["cumulative_flops"] = grouped["cumulative_flops"].mean()
    curve["cumulative_gflop"] = curve["cumulative_flops"] / 1e9
    for metric in CURVE_METRICS:
        curve[metric] = grouped[metric].mean()
        curve[f"{metric}_std"] = grouped[metric].std(ddof=1)
    return curve.reset_index()


def run_at_budget(run: pd.DataFrame, budget: Budget) -> pd.Series:
    """Row of the last round whose mean per-client cumulative cost fits the budget."""
    run = run.sort_values("round")
    column = "cumulative_bytes" if budget.resource == Resource.BYTES else "cumulative_flops"
    return run.iloc[last_within_budget(run[column].tolist(), budget.amount)]


def budget_snapshot(rows: pd.DataFrame, budgets: Sequence[Budget]) -> pd.DataFrame:
    """
    One row per algorithm x sweep value, one column block per budget.

    Each block holds the seed-averaged metrics and the round reached; with two or more
    algorithms it also holds gain_vs_best_baseline columns comparing each algorithm to
    the best of the others at the same sweep value.
    """
    keys = ["algorithm", "sweep_axis", "sweep_value"]
    table: Optional[pd.DataFrame] = None
    for budget in budgets:
        picked = [run_at_budget(run, budget) for _, run in rows.groupby("run_id", sort=True)]
        at_budget = pd.DataFrame(picked)
        grouped = at_budget.groupby(keys, dropna=False, sort=True)
        block = grouped["round"].mean().rename(f"round@{budget.label}").to_frame()
        for metric in SNAPSHOT_METRICS:
            block[f"{metric}@{budget.label}"] = grouped[metric].mean()
        block = block.reset_index()
        table = block if table is None else table.merge(block, on=keys, how="outer")

    algorithms = sorted(table["algorithm"].unique())
    if len(algorithms) > 1:
        for budget in budgets:
            for metric in SNAPSHOT_METRICS:
                column = f"{metric}@{budget.label}"
                table[f"gain_vs_best_baseline_{column}"] = _gains(table, column)
    return table


def _gains(table: pd.DataFrame, column: str) -> List[float]:
    gains = []
    for _, row in table.iterrows():
        same_value = (table["sweep_axis"] == row["sweep_axis"]) & (
            (table["sweep_value"] == row["sweep_value"])
            | (table["sweep_value"].isna() & pd.isna(row["sweep_value"]))
        )
        others = table.loc[same_value & (table["algorithm"] != row["algorithm"]), column]
        others = others.dropna()
        best = float(others.max()) if len(others) else float("nan")
        gains.append(relative_gain(float(row[column]), best))
    return gains


class ReportGenerator:
    """
    Generates report tables from an experiment directory.

    This class creates:
    - curves/<algorithm>__<sweep axis>.csv
    - budget_snapshot.csv (when budgets are given)
    """

    def __init__(self, results_dir: Path):
        self.results_dir = Path(results_dir)
        self.file_manager = FileManager(self.results_dir)
        self.logger = logging.getLogger(f"{__name__}")

    def generate(self, budgets: Sequence[str] = ()) -> Dict[str, Path]:
        """
        Write curve files and, for a non-empty budget list, the budget snapshot.

        Args:
            budgets: Budget strings such as "13MB" or "20GFLOP"

        Returns:
            Mapping of output name to written path
        """
        parsed = [parse_budget(b) for b in budgets]
        rows = load_run_rows(self.file_manager)
        if rows.empty:
            self.logger.warning(f"No run files under {self.results_dir / 'runs'}")
            return {}

        written: Dict[str, Path] = {}
        for (algorithm, axis), group in rows.groupby(["algorithm", "sweep_axis"], sort=True):
            name = f"{algorithm}__{axis}.csv"
            written[name] = self.file_manager.save_csv(curve_frame(group), name, CURVES_DIR)
        self.logger.info(f"Wrote {len(written)} curve files")

        if parsed:
            snapshot = budget_snapshot(rows, parsed)
            written[BUDGET_FILE] = self.file_manager.save_csv(snapshot, BUDGET_FILE)
            labels = ", ".join(b.label for b in parsed)
            self.logger.info(f"Budget snapshot at {labels}: {len(snapshot)} rows")
        return written
