"""Differentiable box-regression loss: weighted L1 plus an IoU-family term."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import torch
from pydantic import BaseModel, ConfigDict, PositiveFloat
from torch import Tensor

from .boxes import BoundingBox

_EPS = 1e-9


class IoUVariant(str, Enum):
    PLAIN = "plain"
    GENERALIZED = "generalized"


class LossConfig(BaseModel):
    """Trade-off weights of the grounding loss."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda_l1: PositiveFloat = 5.0
    lambda_iou: PositiveFloat = 2.0
    iou_variant: IoUVariant = IoUVariant.GENERALIZED


@dataclass(frozen=True)
class LossBreakdown:
    l1_term: float
    iou_term: float
    total: float

    @classmethod
    def compose(cls, l1_term: float, iou_term: float, cfg: LossConfig) -> "LossBreakdown":
        total = cfg.lambda_l1 * l1_term + cfg.lambda_iou * iou_term
        return cls(l1_term=l1_term, iou_term=iou_term, total=total)


@dataclass
class LossTerms:
    """Batch-mean loss tensors; ``total`` is the one to backpropagate."""

    l1: Tensor
    iou: Tensor
    total: Tensor
    per_sample_total: Tensor

    def breakdown(self) -> LossBreakdown:
        return LossBreakdown(
            l1_term=float(self.l1.detach()),
            iou_term=float(self.iou.detach()),
            total=float(self.total.detach()),
        )


def box_cxcywh_to_xyxy(boxes: Tensor) -> Tensor:
    cx, cy, w, h = boxes.unbind(-1)
    return torch.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], dim=-1)


def paired_box_iou(boxes1: Tensor, boxes2: Tensor) -> Tuple[Tensor, Tensor]:
    """IoU of row-aligned (N, 4) xyxy boxes; returns (iou, union)."""
    area1 = (boxes1[..., 2] - boxes1[..., 0]) * (boxes1[..., 3] - boxes1[..., 1])
    area2 = (boxes2[..., 2] - boxes2[..., 0]) * (boxes2[..., 3] - boxes2[..., 1])

    lt = torch.max(boxes1[..., :2], boxes2[..., :2])
    rb = torch.min(boxes1[..., 2:], boxes2[..., 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[..., 0] * wh[..., 1]

    union = area1 + area2 - inter
    return inter / union.clamp(min=_EPS), union


def paired_generalized_box_iou(boxes1: Tensor, boxes2: Tensor) -> Tensor:
    iou, union = paired_box_iou(boxes1, boxes2)

    lt = torch.min(boxes1[..., :2], boxes2[..., :2])
    rb = torch.max(boxes1[..., 2:], boxes2[..., 2:])
    wh = (rb - lt).clamp(min=0)
    enclosure = (wh[..., 0] * wh[..., 1]).clamp(min=_EPS)

    return iou - (enclosure - union) / enclosure


def grounding_loss(pred: Tensor, gt: Tensor, cfg: LossConfig) -> LossTerms:
    """Loss over (N, 4) center-format boxes, averaged over the batch.

    The L1 term is the mean absolute difference over the four coordinates.
    """
    l1 = (pred - gt).abs().mean(dim=-1)
    pred_xyxy = box_cxcywh_to_xyxy(pred)
    gt_xyxy = box_cxcywh_to_xyxy(gt)
    if cfg.iou_variant is IoUVariant.PLAIN:
        overlap, _ = paired_box_iou(pred_xyxy, gt_xyxy)
    else:
        overlap = paired_generalized_box_iou(pred_xyxy, gt_xyxy)
    iou_term = 1.0 - overlap

    per_sample = cfg.lambda_l1 * l1 + cfg.lambda_iou * iou_term
    l1_mean = l1.mean()
    iou_mean = iou_term.mean()
    total = cfg.lambda_l1 * l1_mean + cfg.lambda_iou * iou_mean
    return LossTerms(l1=l1_mean, iou=iou_mean, total=total, per_sample_total=per_sample)


def loss(pred: BoundingBox, gt: BoundingBox, cfg: LossConfig | None = None) -> LossBreakdown:
    cfg = cfg or LossConfig()
    pred_t = torch.tensor([pred.as_tuple()], dtype=torch.float64)
    gt_t = torch.tensor([gt.as_tuple()], dtype=torch.float64)
    terms = grounding_loss(pred_t, gt_t, cfg)
    return LossBreakdown.compose(float(terms.l1), float(terms.iou), cfg)


__all__ = [
    "IoUVariant",
    "LossBreakdown",
    "LossConfig",
    "LossTerms",
    "box_cxcywh_to_xyxy",
    "grounding_loss",
    "loss",
    "paired_box_iou",
    "paired_generalized_box_iou",
]
