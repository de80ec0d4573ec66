from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from src.domain import (
    AnnotationRecord,
    Magnification,
    Split,
    ValidationError,
    build_sample,
    read_annotations,
    write_annotations,
)


def _record(**overrides) -> dict:
    payload = {
        "image_id": "s1",
        "image_file": "images/s1.png",
        "expression": "tumor cells with solid nests",
        "knowledge": None,
        "box": {"cx": 0.5, "cy": 0.5, "w": 0.3, "h": 0.3},
        "magnification": "x20",
        "split": "train",
    }
    payload.update(overrides)
    return payload


def _write_lines(path: Path, payloads) -> Path:
    path.write_text("".join(json.dumps(p) + "\n" for p in payloads), encoding="utf-8")
    return path


def _write_image(root: Path, name: str, size=(64, 64)) -> None:
    (root / "images").mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.zeros((size[1], size[0], 3), dtype=np.uint8)).save(root / "images" / name)


def test_read_annotations_round_trip(tmp_path: Path) -> None:
    path = _write_lines(tmp_path / "annotations.jsonl", [_record(), _record(image_id="s2", knowledge="dense cells")])
    records = read_annotations(path)
    assert [r.image_id for r in records] == ["s1", "s2"]
    assert records[0].magnification is Magnification.X20
    assert records[1].knowledge == "dense cells"

    out = tmp_path / "copy.jsonl"
    write_annotations(out, records)
    assert out.read_text(encoding="utf-8") == path.read_text(encoding="utf-8")


def test_unknown_magnification_is_schema_error_with_line(tmp_path: Path) -> None:
    path = _write_lines(tmp_path / "annotations.jsonl", [_record(), _record(image_id="bad", magnification="x10")])
    with pytest.raises(ValidationError, match=r"annotations.jsonl:2: .*'bad'.*magnification"):
        read_annotations(path)


def test_invalid_json_line_reported(tmp_path: Path) -> None:
    path = tmp_path / "annotations.jsonl"
    path.write_text(json.dumps(_record()) + "\n{not json\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="annotations.jsonl:2: invalid JSON"):
        read_annotations(path)


def test_zero_width_box_names_record(tmp_path: Path) -> None:
    record = AnnotationRecord.model_validate(_record(image_id="zero", box={"cx": 0.5, "cy": 0.5, "w": 0.0, "h": 0.2}))
    with pytest.raises(ValidationError, match="record 'zero': invalid box"):
        build_sample(record, tmp_path, check_file=False)


def test_box_outside_image_rejected(tmp_path: Path) -> None:
    record = AnnotationRecord.model_validate(_record(box={"cx": 0.05, "cy": 0.5, "w": 0.3, "h": 0.2}))
    with pytest.raises(ValidationError, match="outside the image"):
        build_sample(record, tmp_path, check_file=False)


def test_empty_expression_rejected(tmp_path: Path) -> None:
    record = AnnotationRecord.model_validate(_record(expression="   "))
    with pytest.raises(ValidationError, match="expression must not be empty"):
        build_sample(record, tmp_path, check_file=False)


def test_missing_image_file(tmp_path: Path) -> None:
    record = AnnotationRecord.model_validate(_record())
    with pytest.raises(ValidationError, match="image file not found"):
        build_sample(record, tmp_path)


def test_image_size_must_divide_by_stride(tmp_path: Path) -> None:
    _write_image(tmp_path, "s1.png", size=(64, 48))
    record = AnnotationRecord.model_validate(_record())
    with pytest.raises(ValidationError, match="not divisible by 32"):
        build_sample(record, tmp_path)


def test_build_sample_loads_image(tmp_path: Path) -> None:
    _write_image(tmp_path, "s1.png", size=(96, 64))
    sample = build_sample(AnnotationRecord.model_validate(_record()), tmp_path)
    assert (sample.height, sample.width) == (64, 96)
    assert sample.split is Split.TRAIN
    assert sample.image_file == "images/s1.png"
    image = sample.load_image()
    assert image.shape == (3, 64, 96)
    assert image.dtype == np.uint8


def test_to_record_keeps_relative_image_path(tmp_path: Path) -> None:
    _write_image(tmp_path, "s1.png")
    decoy = {"cx": 0.2, "cy": 0.2, "w": 0.2, "h": 0.2}
    sample = build_sample(AnnotationRecord.model_validate(_record(decoy=decoy)), tmp_path)
    record = sample.with_knowledge("dense cells").to_record()
    assert record.image_file == "images/s1.png"
    assert record.knowledge == "dense cells"
    assert record.decoy is not None and record.decoy.model_dump() == decoy


def test_decoy_only_serialized_when_present() -> None:
    assert "decoy" not in AnnotationRecord.model_validate(_record()).to_json_line()
    line = AnnotationRecord.model_validate(_record(decoy={"cx": 0.2, "cy": 0.2, "w": 0.1, "h": 0.1})).to_json_line()
    assert json.loads(line)["decoy"] == {"cx": 0.2, "cy": 0.2, "w": 0.1, "h": 0.1}
