"""Generator modules for result files and report tables."""

from .report_generator import ReportGenerator, budget_snapshot, curve_frame, relative_gain
from .results_generator import (
    RESULT_COLUMNS,
    ResultRow,
    ResultsGenerator,
    load_run_rows,
    make_run_id,
    rows_from_result,
    summary_frame,
)

__all__ = [
    "ReportGenerator",
    "ResultsGenerator",
    "ResultRow",
    "RESULT_COLUMNS",
    "budget_snapshot",
    "curve_frame",
    "load_run_rows",
    "make_run_id",
    "relative_gain",
    "rows_from_result",
    "summary_frame",
]
