"""Report files: JSON for round trips, a markdown table in the all / x40 / x20 layout."""
from __future__ import annotations

import json
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Tuple

from src.domain import write_text_atomic

from .metrics import SUBSETS, EvalReport

ABSENT = "—"


class ReportFormat(str, Enum):
    JSON = "json"
    MARKDOWN = "markdown-table"

    @classmethod
    def _missing_(cls, value: object) -> Optional["ReportFormat"]:
        # "markdown" and "markdown_table" name the same table layout
        if isinstance(value, str) and value.lower().replace("_", "-") in ("markdown", "markdown-table"):
            return cls.MARKDOWN
        return None


def _cell(value: Optional[float]) -> str:
    return ABSENT if value is None else f"{value:.2f}"


def markdown_header(label: Optional[str] = None) -> str:
    columns = [f"{name} {metric}" for name in SUBSETS for metric in ("Acc", "mIoU")]
    if label is not None:
        columns.insert(0, label)
    return "| " + " | ".join(columns) + " |\n|" + "---|" * len(columns)


def markdown_row(report: EvalReport, label: Optional[str] = None) -> str:
    cells = []
    for name in SUBSETS:
        subset = report.subset(name)
        cells += [_cell(subset.acc), _cell(subset.miou)]
    if label is not None:
        cells.insert(0, label)
    return "| " + " | ".join(cells) + " |"


def render_markdown(report: EvalReport) -> str:
    return markdown_header() + "\n" + markdown_row(report) + "\n"


def render_table(rows: Sequence[Tuple[str, EvalReport]], label: str = "run") -> str:
    lines = [markdown_header(label)] + [markdown_row(report, name) for name, report in rows]
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, path: str | Path, fmt: ReportFormat | str = ReportFormat.JSON) -> Path:
    path = Path(path)
    fmt = ReportFormat(fmt)
    if fmt is ReportFormat.JSON:
        text = json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
    else:
        text = render_markdown(report)
    write_text_atomic(path, text)
    return path


def read_report(path: str | Path) -> EvalReport:
    return EvalReport.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


__all__ = [
    "ABSENT",
    "ReportFormat",
    "markdown_header",
    "markdown_row",
    "read_report",
    "render_markdown",
    "render_table",
    "write_report",
]
