"""Single-model and ensemble prediction, and predictions files."""

from corads_grader.inference.ensemble import (
    Ensemble,
    ScanPrediction,
    ensemble_predict,
    mean_output,
    member_outputs,
    predict,
    predict_batch,
    predict_records,
    predict_scan,
)
from corads_grader.inference.predictions import (
    read_member_predictions,
    read_predictions,
    write_predictions,
)

__all__ = [
    "Ensemble",
    "ScanPrediction",
    "ensemble_predict",
    "mean_output",
    "member_outputs",
    "predict",
    "predict_batch",
    "predict_records",
    "predict_scan",
    "read_member_predictions",
    "read_predictions",
    "write_predictions",
]
