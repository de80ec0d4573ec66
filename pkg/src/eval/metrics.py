"""Magnification-aware accuracy and mIoU over one-box-per-expression predictions."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from src.domain import GroundingSample, Magnification, ValidationError, write_text_atomic
from src.geometry import BoundingBox, BoxError, iou

SUBSETS: Tuple[str, ...] = ("all", Magnification.X40.value, Magnification.X20.value)


class EvaluationError(ValueError):
    def __init__(
        self,
        message: str,
        *,
        missing: Sequence[str] = (),
        duplicate: Sequence[str] = (),
        unknown: Sequence[str] = (),
    ) -> None:
        super().__init__(message)
        self.missing = list(missing)
        self.duplicate = list(duplicate)
        self.unknown = list(unknown)


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    threshold_x40: float = Field(default=0.7, gt=0.0, lt=1.0)
    threshold_x20: float = Field(default=0.5, gt=0.0, lt=1.0)

    def threshold(self, magnification: Magnification) -> float:
        return self.threshold_x40 if magnification is Magnification.X40 else self.threshold_x20


@dataclass(frozen=True)
class Prediction:
    image_id: str
    box: BoundingBox
    annotation_index: int = 0

    @property
    def key(self) -> Tuple[str, int]:
        return (self.image_id, self.annotation_index)

    def to_json_line(self) -> str:
        return json.dumps(
            {"image_id": self.image_id, "annotation_index": self.annotation_index, "box": self.box.to_json()}
        )


@dataclass(frozen=True)
class SubsetMetrics:
    n: int
    hits: int
    acc: Optional[float]
    miou: Optional[float]

    @classmethod
    def from_ious(cls, ious: Sequence[float], hits: int) -> "SubsetMetrics":
        if not ious:
            return cls(n=0, hits=0, acc=None, miou=None)
        n = len(ious)
        return cls(n=n, hits=hits, acc=100.0 * hits / n, miou=100.0 * sum(ious) / n)

    def to_json(self) -> Dict[str, Any]:
        return {"n": self.n, "hits": self.hits, "acc": self.acc, "miou": self.miou}

    @classmethod
    def from_json(cls, payload: Mapping[str, Any]) -> "SubsetMetrics":
        return cls(
            n=int(payload["n"]),
            hits=int(payload["hits"]),
            acc=None if payload.get("acc") is None else float(payload["acc"]),
            miou=None if payload.get("miou") is None else float(payload["miou"]),
        )


@dataclass(frozen=True)
class EvalReport:
    all: SubsetMetrics
    x40: SubsetMetrics
    x20: SubsetMetrics
    config: EvalConfig = field(default_factory=EvalConfig)

    def subset(self, name: str) -> SubsetMetrics:
        return getattr(self, name)

    def to_json(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {name: self.subset(name).to_json() for name in SUBSETS}
        payload["thresholds"] = self.config.model_dump()
        return payload

    @classmethod
    def from_json(cls, payload: Mapping[str, Any]) -> "EvalReport":
        return cls(
            all=SubsetMetrics.from_json(payload["all"]),
            x40=SubsetMetrics.from_json(payload["x40"]),
            x20=SubsetMetrics.from_json(payload["x20"]),
            config=EvalConfig.model_validate(payload.get("thresholds") or {}),
        )


@dataclass(frozen=True)
class SampleResult:
    image_id: str
    magnification: Magnification
    iou: float
    hit: bool


def _pair(
    predictions: Iterable[Prediction], samples: Sequence[GroundingSample]
) -> Dict[Tuple[str, int], Prediction]:
    predictions = list(predictions)
    gt_keys = [(sample.image_id, 0) for sample in samples]
    counts = Counter(pred.key for pred in predictions)
    by_key = {pred.key: pred for pred in predictions}
    missing = [f"{i}#{a}" for i, a in gt_keys if (i, a) not in counts]
    duplicate = sorted(f"{i}#{a}" for (i, a), c in counts.items() if c > 1)
    known = set(gt_keys)
    unknown = sorted(f"{i}#{a}" for (i, a) in counts if (i, a) not in known)
    if missing or duplicate or unknown:
        parts = []
        if missing:
            parts.append(f"{len(missing)} missing: {', '.join(missing)}")
        if duplicate:
            parts.append(f"{len(duplicate)} duplicate: {', '.join(duplicate)}")
        if unknown:
            parts.append(f"{len(unknown)} unknown: {', '.join(unknown)}")
        raise EvaluationError(
            "Predictions do not pair one-to-one with ground truth; " + "; ".join(parts),
            missing=missing,
            duplicate=duplicate,
            unknown=unknown,
        )
    return by_key


def score_samples(
    predictions: Sequence[Prediction], samples: Sequence[GroundingSample], cfg: EvalConfig
) -> List[SampleResult]:
    by_key = _pair(predictions, samples)
    results = []
    for sample in samples:
        overlap = iou(by_key[(sample.image_id, 0)].box, sample.box)
        results.append(
            SampleResult(
                image_id=sample.image_id,
                magnification=sample.magnification,
                iou=overlap,
                hit=overlap >= cfg.threshold(sample.magnification),
            )
        )
    return results


def summarize(results: Sequence[SampleResult], cfg: EvalConfig) -> EvalReport:
    subsets: Dict[str, SubsetMetrics] = {}
    for name in SUBSETS:
        chosen = [r for r in results if name == "all" or r.magnification.value == name]
        subsets[name] = SubsetMetrics.from_ious([r.iou for r in chosen], sum(r.hit for r in chosen))
    return EvalReport(all=subsets["all"], x40=subsets["x40"], x20=subsets["x20"], config=cfg)


def evaluate(
    predictions: Sequence[Prediction], samples: Sequence[GroundingSample], cfg: Optional[EvalConfig] = None
) -> EvalReport:
    cfg = cfg or EvalConfig()
    return summarize(score_samples(predictions, samples, cfg), cfg)


def write_predictions(path: str | Path, predictions: Iterable[Prediction]) -> None:
    write_text_atomic(path, "".join(pred.to_json_line() + "\n" for pred in predictions))


def read_predictions(path: str | Path) -> List[Prediction]:
    path = Path(path)
    predictions: List[Prediction] = []
    with path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
                predictions.append(
                    Prediction(
                        image_id=str(payload["image_id"]),
                        box=BoundingBox.from_json(payload["box"]),
                        annotation_index=int(payload.get("annotation_index", 0)),
                    )
                )
            except (ValueError, KeyError, TypeError, BoxError) as exc:
                raise ValidationError(f"{path.name}:{line_no}: invalid prediction: {exc}") from exc
    return predictions


__all__ = [
    "SUBSETS",
    "EvalConfig",
    "EvalReport",
    "EvaluationError",
    "Prediction",
    "SampleResult",
    "SubsetMetrics",
    "evaluate",
    "read_predictions",
    "score_samples",
    "summarize",
    "write_predictions",
]
