"""Evaluation protocol and report files."""

from .metrics import (
    EvalConfig,
    EvalReport,
    EvaluationError,
    Prediction,
    SubsetMetrics,
    evaluate,
    read_predictions,
    write_predictions,
)
from .report import ReportFormat, read_report, render_markdown, write_report

__all__ = [
    "EvalConfig",
    "EvalReport",
    "EvaluationError",
    "Prediction",
    "ReportFormat",
    "SubsetMetrics",
    "evaluate",
    "read_predictions",
    "read_report",
    "render_markdown",
    "write_predictions",
    "write_report",
]
