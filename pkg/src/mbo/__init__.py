"""Offline model-based optimization: synthetic tasks, surrogates, optimizers and an evaluation harness."""
from .harness import (AggregateReport, RunConfig, RunRecord, TrialResult, aggregate, emit_report,
                      load_results, run, run_trial, save_results)
from .optimizers import METHODS
from .stats import bootstrap_ci, iqm, percentile_score
from .tasks import TASKS, build_dataset, get_task, oracle_evaluate, score_normalize

__version__ = "0.1.0"

__all__ = [
    "AggregateReport", "RunConfig", "RunRecord", "TrialResult", "aggregate", "emit_report", "load_results",
    "run", "run_trial", "save_results", "METHODS", "bootstrap_ci", "iqm", "percentile_score", "TASKS",
    "build_dataset", "get_task", "oracle_evaluate", "score_normalize",
]
