from __future__ import annotations

import random

import numpy as np
import pytest

from src.geometry import (
    BoundingBox,
    BoxError,
    CornerBox,
    box_from_json,
    box_to_json,
    from_corners,
    giou,
    iou,
    to_corners,
)


def _random_box(rng: random.Random) -> BoundingBox:
    w = rng.uniform(0.02, 0.6)
    h = rng.uniform(0.02, 0.6)
    return BoundingBox(rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h)


def _raster_iou(a: BoundingBox, b: BoundingBox, size: int = 2048) -> float:
    centers = (np.arange(size) + 0.5) / size

    def mask(box: BoundingBox) -> np.ndarray:
        c = to_corners(box)
        xs = (centers >= c.x0) & (centers < c.x1)
        ys = (centers >= c.y0) & (centers < c.y1)
        return ys[:, None] & xs[None, :]

    ma, mb = mask(a), mask(b)
    union = np.logical_or(ma, mb).sum()
    return float(np.logical_and(ma, mb).sum() / union) if union else 0.0


@pytest.mark.parametrize(
    "box, corners",
    [
        ((0.5, 0.5, 1.0, 1.0), (0.0, 0.0, 1.0, 1.0)),
        ((0.25, 0.25, 0.5, 0.5), (0.0, 0.0, 0.5, 0.5)),
        ((0.5, 0.5, 0.2, 0.4), (0.4, 0.3, 0.6, 0.7)),
    ],
)
def test_to_corners(box, corners) -> None:
    c = to_corners(BoundingBox(*box))
    assert (c.x0, c.y0, c.x1, c.y1) == pytest.approx(corners, abs=1e-12)
    back = from_corners(c)
    assert back.as_tuple() == pytest.approx(box, abs=1e-9)


def test_iou_examples() -> None:
    same = BoundingBox(0.5, 0.5, 0.5, 0.5)
    assert iou(same, same) == pytest.approx(1.0)
    assert iou(BoundingBox(0.2, 0.2, 0.2, 0.2), BoundingBox(0.8, 0.8, 0.2, 0.2)) == 0.0
    assert iou(BoundingBox(0.25, 0.25, 0.5, 0.5), same) == pytest.approx(1 / 7, abs=1e-6)


def test_giou_examples() -> None:
    a = BoundingBox(0.2, 0.2, 0.2, 0.2)
    b = BoundingBox(0.8, 0.8, 0.2, 0.2)
    assert giou(a, a) == pytest.approx(1.0)
    assert giou(a, b) == pytest.approx(-0.875, abs=1e-9)


def test_iou_symmetry_and_giou_bound() -> None:
    rng = random.Random(0)
    for _ in range(2000):
        a, b = _random_box(rng), _random_box(rng)
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0
        assert giou(a, b) <= iou(a, b) + 1e-12


def _grid_box(rng: random.Random, cells: int = 256) -> BoundingBox:
    # edges on the pixel grid so the raster count is exact
    x0, x1 = sorted(rng.sample(range(cells + 1), 2))
    y0, y1 = sorted(rng.sample(range(cells + 1), 2))
    return from_corners(CornerBox(x0 / cells, y0 / cells, x1 / cells, y1 / cells))


def test_iou_matches_raster_oracle() -> None:
    rng = random.Random(1)
    for _ in range(25):
        a, b = _grid_box(rng), _grid_box(rng)
        assert iou(a, b) == pytest.approx(_raster_iou(a, b), abs=1e-9)


def _pixel_centers_in(lo: np.ndarray, hi: np.ndarray, size: int) -> np.ndarray:
    # pixel k is covered when its center (k + 0.5) / size lies in [lo, hi)
    return np.clip(np.ceil(hi * size - 0.5) - np.ceil(lo * size - 0.5), 0, size)


def _raster_iou_batch(a: list, b: list, size: int = 2048) -> np.ndarray:
    """Pixel-center raster IoU for many pairs; axis-aligned masks factor into per-axis counts."""
    ca = np.array([[c.x0, c.y0, c.x1, c.y1] for c in map(to_corners, a)])
    cb = np.array([[c.x0, c.y0, c.x1, c.y1] for c in map(to_corners, b)])
    area_a = _pixel_centers_in(ca[:, 0], ca[:, 2], size) * _pixel_centers_in(ca[:, 1], ca[:, 3], size)
    area_b = _pixel_centers_in(cb[:, 0], cb[:, 2], size) * _pixel_centers_in(cb[:, 1], cb[:, 3], size)
    lo, hi = np.maximum(ca, cb)[:, :2], np.minimum(ca, cb)[:, 2:]
    inter = _pixel_centers_in(lo[:, 0], hi[:, 0], size) * _pixel_centers_in(lo[:, 1], hi[:, 1], size)
    union = area_a + area_b - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def _off_grid_pairs(seed: int, n: int) -> tuple[list, list]:
    rng = random.Random(seed)

    def box() -> BoundingBox:
        w, h = rng.uniform(0.35, 0.95), rng.uniform(0.35, 0.95)
        return BoundingBox(rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h)

    pairs = [(box(), box()) for _ in range(n)]
    return [a for a, _ in pairs], [b for _, b in pairs]


def test_axis_counts_match_full_raster() -> None:
    a, b = _off_grid_pairs(4, 5)
    batch = _raster_iou_batch(a, b)
    for i in range(5):
        assert batch[i] == pytest.approx(_raster_iou(a[i], b[i]), abs=1e-12)


def test_iou_matches_raster_oracle_off_grid() -> None:
    a, b = _off_grid_pairs(5, 1000)
    raster = _raster_iou_batch(a, b)
    exact = np.array([iou(x, y) for x, y in zip(a, b)])
    assert (raster > 0).sum() > 400
    worst = int(np.argmax(np.abs(exact - raster)))
    assert abs(exact[worst] - raster[worst]) < 2e-3, (a[worst], b[worst])


def test_iou_scale_invariance() -> None:
    rng = random.Random(2)
    for _ in range(200):
        a, b = _random_box(rng), _random_box(rng)
        s = rng.uniform(0.1, 1.0)
        scaled = iou(from_corners(to_corners(a).scaled(s)), from_corners(to_corners(b).scaled(s)))
        assert scaled == pytest.approx(iou(a, b), abs=1e-9)


@pytest.mark.parametrize(
    "values",
    [
        (0.5, 0.5, 0.0, 0.2),
        (0.5, 0.5, 0.2, 1e-7),
        (1.2, 0.5, 0.2, 0.2),
        (0.5, 0.5, 1.5, 0.2),
        (float("nan"), 0.5, 0.2, 0.2),
    ],
)
def test_invalid_boxes_rejected(values) -> None:
    with pytest.raises(BoxError):
        BoundingBox(*values)


def test_corner_box_rejects_inverted_extents() -> None:
    with pytest.raises(BoxError):
        CornerBox(0.6, 0.1, 0.4, 0.2)


def test_box_json_encoding() -> None:
    box = BoundingBox(0.5, 0.4, 0.2, 0.3)
    payload = box_to_json(box)
    assert payload == {"cx": 0.5, "cy": 0.4, "w": 0.2, "h": 0.3}
    assert box_from_json(payload) == box
    with pytest.raises(BoxError, match="missing keys: h"):
        box_from_json({"cx": 0.5, "cy": 0.5, "w": 0.2})
    with pytest.raises(BoxError):
        box_from_json({"cx": "left", "cy": 0.5, "w": 0.2, "h": 0.2})


def test_within_image() -> None:
    assert BoundingBox(0.5, 0.5, 1.0, 1.0).within_image()
    assert not BoundingBox(0.05, 0.5, 0.2, 0.2).within_image()
