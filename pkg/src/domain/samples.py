"""Grounding sample records shared by the generator, the model and the evaluator."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as SchemaError

from src.geometry import BoundingBox, BoxError

STRIDE = 32


class ValidationError(ValueError):
    """Raised when an annotation or sample fails validation."""


class Magnification(str, Enum):
    X40 = "x40"
    X20 = "x20"


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class BoxPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cx: float
    cy: float
    w: float
    h: float


class AnnotationRecord(BaseModel):
    """One line of ``annotations.jsonl``."""

    model_config = ConfigDict(extra="forbid")

    image_id: str = Field(min_length=1)
    image_file: str = Field(min_length=1)
    expression: str
    knowledge: Optional[str] = None
    box: BoxPayload
    magnification: Magnification
    split: Split
    terms: List[str] = Field(default_factory=list)
    decoy: Optional[BoxPayload] = None

    def to_json_line(self) -> str:
        payload: Dict[str, Any] = {
            "image_id": self.image_id,
            "image_file": self.image_file,
            "expression": self.expression,
            "knowledge": self.knowledge,
            "box": {"cx": self.box.cx, "cy": self.box.cy, "w": self.box.w, "h": self.box.h},
            "magnification": self.magnification.value,
            "split": self.split.value,
        }
        if self.terms:
            payload["terms"] = list(self.terms)
        if self.decoy is not None:
            payload["decoy"] = self.decoy.model_dump()
        return json.dumps(payload, ensure_ascii=False)


@dataclass(frozen=True)
class GroundingSample:
    image_id: str
    image_path: Path
    expression: str
    box: BoundingBox
    magnification: Magnification
    split: Split
    knowledge: Optional[str] = None
    height: int = 0
    width: int = 0
    terms: Tuple[str, ...] = field(default_factory=tuple)
    decoy: Optional[BoundingBox] = None
    # path relative to the corpus root, as written in annotations.jsonl
    relative_file: str = ""

    @property
    def image_file(self) -> str:
        return self.relative_file or self.image_path.name

    def load_image(self) -> np.ndarray:
        """Return the raster as a uint8 array of shape (3, H, W)."""
        with Image.open(self.image_path) as handle:
            array = np.asarray(handle.convert("RGB"), dtype=np.uint8)
        return np.ascontiguousarray(array.transpose(2, 0, 1))

    def with_knowledge(self, knowledge: Optional[str]) -> "GroundingSample":
        return replace(self, knowledge=knowledge)

    def to_record(self) -> AnnotationRecord:
        return AnnotationRecord(
            image_id=self.image_id,
            image_file=self.image_file,
            expression=self.expression,
            knowledge=self.knowledge,
            box=BoxPayload(**self.box.to_json()),
            magnification=self.magnification,
            split=self.split,
            terms=list(self.terms),
            decoy=BoxPayload(**self.decoy.to_json()) if self.decoy is not None else None,
        )


def check_image_size(height: int, width: int, *, context: str = "image") -> None:
    if height <= 0 or width <= 0 or height % STRIDE or width % STRIDE:
        raise ValidationError(
            f"{context}: size {height}x{width} is not divisible by {STRIDE}"
        )


def build_sample(record: AnnotationRecord, root: Path, *, check_file: bool = True) -> GroundingSample:
    """Turn a schema-valid record into a validated sample rooted at ``root``."""
    context = f"record '{record.image_id}'"
    if not record.expression.strip():
        raise ValidationError(f"{context}: expression must not be empty")
    try:
        box = BoundingBox(record.box.cx, record.box.cy, record.box.w, record.box.h)
    except BoxError as exc:
        raise ValidationError(f"{context}: invalid box: {exc}") from exc
    if not box.within_image():
        raise ValidationError(f"{context}: box extends outside the image: {box}")
    decoy = None
    if record.decoy is not None:
        try:
            decoy = BoundingBox(record.decoy.cx, record.decoy.cy, record.decoy.w, record.decoy.h)
        except BoxError as exc:
            raise ValidationError(f"{context}: invalid decoy box: {exc}") from exc

    image_path = root / record.image_file
    height = width = 0
    if check_file:
        if not image_path.exists():
            raise ValidationError(f"{context}: image file not found: {image_path}")
        with Image.open(image_path) as handle:
            width, height = handle.size
        check_image_size(height, width, context=context)

    return GroundingSample(
        image_id=record.image_id,
        image_path=image_path,
        expression=record.expression,
        box=box,
        magnification=record.magnification,
        split=record.split,
        knowledge=record.knowledge,
        height=height,
        width=width,
        terms=tuple(record.terms),
        decoy=decoy,
        relative_file=record.image_file,
    )


def read_annotations(path: str | Path) -> List[AnnotationRecord]:
    """Parse an annotations JSONL file, reporting schema problems by line number."""
    path = Path(path)
    records: List[AnnotationRecord] = []
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path.name}:{line_no}: invalid JSON: {exc.msg}") from exc
            try:
                records.append(AnnotationRecord.model_validate(payload))
            except SchemaError as exc:
                image_id = payload.get("image_id") if isinstance(payload, dict) else None
                problems = "; ".join(
                    f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
                )
                raise ValidationError(
                    f"{path.name}:{line_no}: schema violation in record '{image_id}': {problems}"
                ) from exc
    return records


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def write_annotations(path: str | Path, records: Iterable[AnnotationRecord]) -> None:
    lines = [record.to_json_line() for record in records]
    write_text_atomic(path, "".join(line + "\n" for line in lines))


__all__ = [
    "STRIDE",
    "AnnotationRecord",
    "BoxPayload",
    "GroundingSample",
    "Magnification",
    "Split",
    "ValidationError",
    "build_sample",
    "check_image_size",
    "read_annotations",
    "write_annotations",
    "write_text_atomic",
]
