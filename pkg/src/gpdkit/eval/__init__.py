"""Metrics, view-based splits, detection and grasp selection."""

from .detect import (ScoredGrasp, SelectionConfig, SelectionError, cluster_positions, detect,
                     encode_candidates, select_grasp)
from .metrics import MetricError, PrCurve, operating_threshold, pr_curve, recall_at_precision
from .report import EvalReport, evaluate_model, score_dataset
from .split import SplitError, leave_one_object_out, split_by_view

__all__ = [
    "EvalReport", "MetricError", "PrCurve", "ScoredGrasp", "SelectionConfig", "SelectionError",
    "SplitError", "cluster_positions", "detect", "encode_candidates", "evaluate_model",
    "leave_one_object_out", "operating_threshold", "pr_curve", "recall_at_precision",
    "score_dataset", "select_grasp", "split_by_view",
]
