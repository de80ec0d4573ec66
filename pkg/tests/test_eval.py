from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import List

import pytest

from src.domain import GroundingSample, Magnification, ValidationError
from src.eval import (
    EvalConfig,
    EvalReport,
    EvaluationError,
    Prediction,
    ReportFormat,
    SubsetMetrics,
    evaluate,
    read_predictions,
    read_report,
    render_markdown,
    write_predictions,
    write_report,
)
from src.eval.report import ABSENT, markdown_header, render_table
from src.geometry import BoundingBox

GT = BoundingBox(0.5, 0.5, 0.4, 0.4)


def _samples(template: GroundingSample, magnifications: List[Magnification]) -> List[GroundingSample]:
    return [
        replace(template, image_id=f"s{i}", box=GT, magnification=mag, decoy=None)
        for i, mag in enumerate(magnifications)
    ]


def _scaled(width: float) -> BoundingBox:
    # same center and height as GT, so IoU == width / 0.4
    return BoundingBox(0.5, 0.5, width, 0.4)


def test_x40_threshold(tiny_samples) -> None:
    samples = _samples(tiny_samples[0], [Magnification.X40, Magnification.X40])
    predictions = [Prediction("s0", _scaled(0.276)), Prediction("s1", _scaled(0.284))]
    report = evaluate(predictions, samples)
    assert report.x40.n == 2
    assert report.x40.hits == 1
    assert report.x40.acc == pytest.approx(50.0)
    assert report.x40.miou == pytest.approx(70.0)


def test_x20_threshold(tiny_samples) -> None:
    samples = _samples(tiny_samples[0], [Magnification.X20, Magnification.X20])
    predictions = [Prediction("s0", _scaled(0.196)), Prediction("s1", _scaled(0.204))]
    report = evaluate(predictions, samples)
    assert report.x20.hits == 1
    assert report.x20.miou == pytest.approx(50.0)


def test_same_iou_scored_per_magnification(tiny_samples) -> None:
    samples = _samples(tiny_samples[0], [Magnification.X40, Magnification.X20])
    predictions = [Prediction("s0", _scaled(0.24)), Prediction("s1", _scaled(0.24))]
    report = evaluate(predictions, samples)
    assert (report.x40.hits, report.x20.hits) == (0, 1)
    assert report.all.n == 2
    assert report.all.acc == pytest.approx(50.0)
    assert report.all.miou == pytest.approx(60.0)


def test_absent_subset(tiny_samples) -> None:
    samples = _samples(tiny_samples[0], [Magnification.X20])
    report = evaluate([Prediction("s0", GT)], samples)
    assert report.x40 == SubsetMetrics(n=0, hits=0, acc=None, miou=None)
    assert report.x20.acc == pytest.approx(100.0)
    row = render_markdown(report).splitlines()[-1]
    assert row.count(ABSENT) == 2
    assert "100.00" in row


def test_accuracy_is_monotonic_in_threshold(tiny_samples) -> None:
    samples = _samples(tiny_samples[0], [Magnification.X40] * 5)
    predictions = [Prediction(f"s{i}", _scaled(w)) for i, w in enumerate([0.1, 0.2, 0.25, 0.3, 0.38])]
    accs = [
        evaluate(predictions, samples, EvalConfig(threshold_x40=t)).x40.acc for t in (0.2, 0.4, 0.6, 0.8)
    ]
    assert accs == sorted(accs, reverse=True)


def test_thresholds_must_be_open_unit_interval() -> None:
    with pytest.raises(ValueError):
        EvalConfig(threshold_x40=1.0)
    with pytest.raises(ValueError):
        EvalConfig(threshold_x20=0.0)


def test_pairing_errors(tiny_samples) -> None:
    samples = _samples(tiny_samples[0], [Magnification.X40, Magnification.X20])
    predictions = [Prediction("s0", GT), Prediction("s0", GT), Prediction("ghost", GT)]
    with pytest.raises(EvaluationError) as info:
        evaluate(predictions, samples)
    assert info.value.missing == ["s1#0"]
    assert info.value.duplicate == ["s0#0"]
    assert info.value.unknown == ["ghost#0"]
    assert "1 missing: s1#0" in str(info.value)


def test_predictions_file_round_trip(tmp_path: Path) -> None:
    predictions = [Prediction("a", GT), Prediction("b", BoundingBox(0.3, 0.3, 0.2, 0.1))]
    path = tmp_path / "predictions.jsonl"
    write_predictions(path, predictions)
    assert read_predictions(path) == predictions


def test_predictions_file_errors(tmp_path: Path) -> None:
    path = tmp_path / "predictions.jsonl"
    good = json.dumps({"image_id": "a", "box": GT.to_json()})
    bad = json.dumps({"image_id": "b", "box": {"cx": 0.5, "cy": 0.5, "w": -0.1, "h": 0.2}})
    path.write_text(good + "\n" + bad + "\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="predictions.jsonl:2: invalid prediction"):
        read_predictions(path)

    path.write_text(good + "\n\n" + json.dumps({"image_id": "c"}) + "\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="predictions.jsonl:3"):
        read_predictions(path)


def test_report_json_round_trip(tiny_samples, tmp_path: Path) -> None:
    samples = _samples(tiny_samples[0], [Magnification.X40])
    report = evaluate([Prediction("s0", _scaled(0.3))], samples, EvalConfig(threshold_x40=0.6))
    path = write_report(report, tmp_path / "report.json")
    payload = json.loads(path.read_text(encoding="utf-8"))
    assert payload["x20"] == {"n": 0, "hits": 0, "acc": None, "miou": None}
    assert payload["thresholds"]["threshold_x40"] == 0.6
    assert read_report(path) == report


def test_markdown_layout(tiny_samples, tmp_path: Path) -> None:
    samples = _samples(tiny_samples[0], [Magnification.X40, Magnification.X20])
    report = evaluate([Prediction("s0", GT), Prediction("s1", _scaled(0.1))], samples)
    assert markdown_header().startswith("| all Acc | all mIoU | x40 Acc | x40 mIoU | x20 Acc | x20 mIoU |")
    text = write_report(report, tmp_path / "report.md", "markdown").read_text(encoding="utf-8")
    assert text.splitlines()[-1] == "| 50.00 | 62.50 | 100.00 | 100.00 | 0.00 | 25.00 |"

    table = render_table([("none", report), ("branch-kfm", report)], label="mode")
    lines = table.splitlines()
    assert lines[0].startswith("| mode | all Acc")
    assert lines[3].startswith("| branch-kfm | 50.00")


@pytest.mark.parametrize("fmt", ["markdown-table", "markdown", "markdown_table", ReportFormat.MARKDOWN])
def test_markdown_table_format_names(fmt, tiny_samples, tmp_path: Path) -> None:
    samples = _samples(tiny_samples[0], [Magnification.X40])
    report = evaluate([Prediction("s0", GT)], samples)
    assert ReportFormat(fmt) is ReportFormat.MARKDOWN
    text = write_report(report, tmp_path / "report.md", fmt).read_text(encoding="utf-8")
    assert text == render_markdown(report)
    with pytest.raises(ValueError):
        ReportFormat("html")


def test_report_from_json_defaults_thresholds() -> None:
    empty = {"n": 0, "hits": 0, "acc": None, "miou": None}
    report = EvalReport.from_json({"all": empty, "x40": empty, "x20": empty})
    assert report.config == EvalConfig()
