from __future__ import annotations

import pytest
import torch

from src.geometry import BoundingBox
from src.geometry.losses import IoUVariant, LossBreakdown, LossConfig, box_cxcywh_to_xyxy, grounding_loss, loss


def test_perfect_prediction_is_zero() -> None:
    box = BoundingBox(0.4, 0.6, 0.3, 0.2)
    result = loss(box, box)
    assert result.l1_term == pytest.approx(0.0, abs=1e-12)
    assert result.iou_term == pytest.approx(0.0, abs=1e-12)
    assert result.total == pytest.approx(0.0, abs=1e-12)


def test_total_is_weighted_sum() -> None:
    breakdown = LossBreakdown.compose(0.1, 0.3, LossConfig())
    assert breakdown.total == pytest.approx(1.1)


def test_disjoint_boxes_plain_variant() -> None:
    cfg = LossConfig(iou_variant=IoUVariant.PLAIN)
    result = loss(BoundingBox(0.2, 0.2, 0.2, 0.2), BoundingBox(0.8, 0.8, 0.2, 0.2), cfg)
    assert result.iou_term == pytest.approx(1.0)
    assert result.l1_term == pytest.approx(0.3)
    assert result.total == pytest.approx(5 * 0.3 + 2 * 1.0)


def test_disjoint_boxes_generalized_variant() -> None:
    result = loss(BoundingBox(0.2, 0.2, 0.2, 0.2), BoundingBox(0.8, 0.8, 0.2, 0.2))
    assert result.iou_term == pytest.approx(1.875)


def test_lambdas_must_be_positive() -> None:
    with pytest.raises(ValueError):
        LossConfig(lambda_l1=0.0)


def test_batch_loss_matches_scalar_loss() -> None:
    preds = [BoundingBox(0.5, 0.5, 0.3, 0.3), BoundingBox(0.3, 0.6, 0.2, 0.4)]
    gts = [BoundingBox(0.45, 0.55, 0.35, 0.25), BoundingBox(0.7, 0.2, 0.2, 0.2)]
    cfg = LossConfig()
    terms = grounding_loss(
        torch.tensor([p.as_tuple() for p in preds], dtype=torch.float64),
        torch.tensor([g.as_tuple() for g in gts], dtype=torch.float64),
        cfg,
    )
    expected = sum(loss(p, g, cfg).total for p, g in zip(preds, gts)) / 2
    assert float(terms.total) == pytest.approx(expected)
    assert terms.per_sample_total.shape == (2,)


@pytest.mark.parametrize("variant", list(IoUVariant))
def test_gradcheck(variant: IoUVariant) -> None:
    cfg = LossConfig(iou_variant=variant)
    gt = torch.tensor([[0.5, 0.5, 0.4, 0.3], [0.35, 0.6, 0.2, 0.3]], dtype=torch.float64)
    pred = torch.tensor([[0.52, 0.47, 0.35, 0.33], [0.4, 0.56, 0.25, 0.2]], dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda p: grounding_loss(p, gt, cfg).total, (pred,), eps=1e-6, atol=1e-6)


def _overlapping_pairs(seed: int, n: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Pairs away from the kinks of |.|, min and max so the loss is smooth around each one."""
    gen = torch.Generator().manual_seed(seed)
    preds, gts = [], []
    while len(preds) < n:
        wh = 0.2 + 0.3 * torch.rand(2, generator=gen, dtype=torch.float64)
        c = wh / 2 + (1 - wh) * torch.rand(2, generator=gen, dtype=torch.float64)
        gt = torch.cat([c, wh])
        sign = torch.where(torch.rand(4, generator=gen) < 0.5, -1.0, 1.0).to(torch.float64)
        pred = gt + sign * (0.005 + 0.045 * torch.rand(4, generator=gen, dtype=torch.float64))
        edges = box_cxcywh_to_xyxy(pred) - box_cxcywh_to_xyxy(gt)
        if edges.abs().min() < 1e-3:
            continue
        preds.append(pred)
        gts.append(gt)
    return torch.stack(preds), torch.stack(gts)


@pytest.mark.parametrize("variant", list(IoUVariant))
def test_gradient_matches_central_differences(variant: IoUVariant) -> None:
    cfg = LossConfig(iou_variant=variant)
    pred, gt = _overlapping_pairs(13, 100)
    pred.requires_grad_(True)
    grounding_loss(pred, gt, cfg).per_sample_total.sum().backward()
    analytic = pred.grad.detach()

    step = 1e-5
    numeric = torch.zeros_like(analytic)
    with torch.no_grad():
        for j in range(4):
            shift = torch.zeros(4, dtype=torch.float64)
            shift[j] = step
            up = grounding_loss(pred + shift, gt, cfg).per_sample_total
            down = grounding_loss(pred - shift, gt, cfg).per_sample_total
            numeric[:, j] = (up - down) / (2 * step)

    rel = (analytic - numeric).norm(dim=1) / analytic.norm(dim=1).clamp(min=1e-8)
    assert float(rel.max()) < 1e-4


def test_generalized_variant_has_gradient_for_disjoint_boxes() -> None:
    pred = torch.tensor([[0.2, 0.2, 0.2, 0.2]], dtype=torch.float64, requires_grad=True)
    gt = torch.tensor([[0.8, 0.8, 0.2, 0.2]], dtype=torch.float64)
    terms = grounding_loss(pred, gt, LossConfig(lambda_l1=1e-9))
    terms.total.backward()
    assert pred.grad is not None
    assert pred.grad.abs().sum() > 0
