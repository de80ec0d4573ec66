"""Box representations, conversions and overlap measures.

Boxes are normalized to the image size and stored in center format
``(cx, cy, w, h)``. Overlap measures are computed on the corner form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Tuple

MIN_SIDE = 1e-6


class BoxError(ValueError):
    """Raised when a box violates its invariants."""


@dataclass(frozen=True)
class CornerBox:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise BoxError(f"Corner box has inverted extents: {self}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def scaled(self, factor: float) -> "CornerBox":
        return CornerBox(self.x0 * factor, self.y0 * factor, self.x1 * factor, self.y1 * factor)

    def clamped(self) -> "CornerBox":
        """Clip the box to the unit square."""
        return CornerBox(max(0.0, self.x0), max(0.0, self.y0), min(1.0, self.x1), min(1.0, self.y1))


@dataclass(frozen=True)
class BoundingBox:
    """Normalized center-format box; the center is a fraction of image width/height."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        values = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) for v in values):
            raise BoxError(f"Box coordinates must be finite: {values}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise BoxError(f"Box center must lie in [0, 1]: ({self.cx}, {self.cy})")
        if self.w <= MIN_SIDE or self.h <= MIN_SIDE:
            raise BoxError(f"Degenerate box: w={self.w}, h={self.h}")
        if self.w > 1.0 or self.h > 1.0:
            raise BoxError(f"Box size must not exceed the image: w={self.w}, h={self.h}")

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h)

    def within_image(self, tolerance: float = 1e-9) -> bool:
        corners = to_corners(self)
        return (
            corners.x0 >= -tolerance
            and corners.y0 >= -tolerance
            and corners.x1 <= 1.0 + tolerance
            and corners.y1 <= 1.0 + tolerance
        )

    def to_json(self) -> Dict[str, float]:
        return {"cx": self.cx, "cy": self.cy, "w": self.w, "h": self.h}

    @classmethod
    def from_json(cls, payload: Mapping[str, Any]) -> "BoundingBox":
        if not isinstance(payload, Mapping):
            raise BoxError("Box payload must be a mapping with cx, cy, w, h.")
        missing = [key for key in ("cx", "cy", "w", "h") if key not in payload]
        if missing:
            raise BoxError(f"Box payload missing keys: {', '.join(missing)}")
        try:
            return cls(*(float(payload[key]) for key in ("cx", "cy", "w", "h")))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, BoxError):
                raise
            raise BoxError(f"Box payload has non-numeric values: {dict(payload)}") from exc


def to_corners(b: BoundingBox) -> CornerBox:
    half_w = b.w / 2.0
    half_h = b.h / 2.0
    return CornerBox(b.cx - half_w, b.cy - half_h, b.cx + half_w, b.cy + half_h)


def from_corners(c: CornerBox) -> BoundingBox:
    return BoundingBox((c.x0 + c.x1) / 2.0, (c.y0 + c.y1) / 2.0, c.x1 - c.x0, c.y1 - c.y0)


def _overlap(a: CornerBox, b: CornerBox) -> Tuple[float, float]:
    """Return (intersection, union) areas of two corner boxes."""
    inter_w = max(0.0, min(a.x1, b.x1) - max(a.x0, b.x0))
    inter_h = max(0.0, min(a.y1, b.y1) - max(a.y0, b.y0))
    inter = inter_w * inter_h
    return inter, a.area + b.area - inter


def corner_iou(a: CornerBox, b: CornerBox) -> float:
    inter, union = _overlap(a, b)
    if union <= 0.0:
        return 0.0
    return inter / union


def iou(a: BoundingBox, b: BoundingBox) -> float:
    return corner_iou(to_corners(a), to_corners(b))


def giou(a: BoundingBox, b: BoundingBox) -> float:
    ca, cb = to_corners(a), to_corners(b)
    inter, union = _overlap(ca, cb)
    enclosure = (max(ca.x1, cb.x1) - min(ca.x0, cb.x0)) * (max(ca.y1, cb.y1) - min(ca.y0, cb.y0))
    overlap = inter / union if union > 0.0 else 0.0
    return overlap - (enclosure - union) / enclosure


def box_to_json(b: BoundingBox) -> Dict[str, float]:
    return b.to_json()


def box_from_json(payload: Mapping[str, Any]) -> BoundingBox:
    return BoundingBox.from_json(payload)


__all__ = [
    "MIN_SIDE",
    "BoxError",
    "BoundingBox",
    "box_from_json",
    "box_to_json",
    "CornerBox",
    "corner_iou",
    "from_corners",
    "giou",
    "iou",
    "to_corners",
]
