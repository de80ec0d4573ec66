"""Domain layer: grounding samples and their annotation schema."""

from .samples import (
    STRIDE,
    AnnotationRecord,
    BoxPayload,
    GroundingSample,
    Magnification,
    Split,
    ValidationError,
    build_sample,
    check_image_size,
    read_annotations,
    write_annotations,
    write_text_atomic,
)

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
