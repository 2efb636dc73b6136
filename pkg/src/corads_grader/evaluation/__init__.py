"""Metrics, bootstrap statistics, evaluation reports and plots."""

from corads_grader.evaluation.bootstrap import (
    auc_metric,
    bootstrap_ci,
    bootstrap_significance,
    qwk_metric,
)
from corads_grader.evaluation.report import (
    Comparison,
    Dichotomization,
    EvalReport,
    compare_runs,
    evaluate_run,
    summarize_reports,
    write_roc_csv,
)
from corads_grader.evaluation.stats import (
    RocPoint,
    auc_score,
    confusion_matrix,
    off_by_more_than,
    qwk,
    roc_auc,
)

__all__ = [
    "Comparison",
    "Dichotomization",
    "EvalReport",
    "RocPoint",
    "auc_metric",
    "auc_score",
    "bootstrap_ci",
    "bootstrap_significance",
    "compare_runs",
    "confusion_matrix",
    "evaluate_run",
    "off_by_more_than",
    "qwk",
    "qwk_metric",
    "roc_auc",
    "summarize_reports",
    "write_roc_csv",
]
