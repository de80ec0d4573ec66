"""Box geometry shared by the corpus generator, the model and the evaluator."""

from .boxes import (
    MIN_SIDE,
    BoundingBox,
    BoxError,
    box_from_json,
    box_to_json,
    CornerBox,
    corner_iou,
    from_corners,
    giou,
    iou,
    to_corners,
)

__all__ = [
    "MIN_SIDE",
    "BoundingBox",
    "BoxError",
    "box_from_json",
    "box_to_json",
    "CornerBox",
    "corner_iou",
    "from_corners",
    "giou",
    "iou",
    "to_corners",
]
