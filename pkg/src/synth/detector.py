"""Brute-force texture detector used to check corpus solvability.

Atypical regions are dark, high-contrast cell fields; background tissue is
pale and low-contrast. Thresholding the local grey-level variance and
keeping the large connected components recovers the rendered regions
without any learning.
"""
from __future__ import annotations

from typing import List

import numpy as np
from scipy import ndimage

from src.geometry import BoundingBox

VARIANCE_THRESHOLD = 1500.0
_LUMA = np.array([0.299, 0.587, 0.114])


def local_variance(gray: np.ndarray, window: int) -> np.ndarray:
    gray = gray.astype(np.float64)
    mean = ndimage.uniform_filter(gray, size=window, mode="reflect")
    mean_sq = ndimage.uniform_filter(gray * gray, size=window, mode="reflect")
    return np.maximum(mean_sq - mean * mean, 0.0)


def detect_regions(
    image: np.ndarray,
    *,
    threshold: float = VARIANCE_THRESHOLD,
    window: int | None = None,
    min_area_fraction: float = 0.01,
) -> List[BoundingBox]:
    """Return boxes of high-variance regions, largest first.

    ``image`` is either (3, H, W) or (H, W, 3) uint8, or a (H, W) grey map.
    """
    array = np.asarray(image)
    if array.ndim == 3 and array.shape[0] == 3:
        array = array.transpose(1, 2, 0)
    gray = array @ _LUMA if array.ndim == 3 else array.astype(np.float64)
    height, width = gray.shape
    window = window or max(5, min(height, width) // 16)

    mask = local_variance(gray, window) > threshold
    structure = np.ones((window // 2 + 1, window // 2 + 1), dtype=bool)
    mask = ndimage.binary_closing(mask, structure=structure)
    mask = ndimage.binary_fill_holes(mask)
    mask = ndimage.binary_opening(mask, structure=structure)

    labels, count = ndimage.label(mask)
    if count == 0:
        return []
    min_area = min_area_fraction * height * width
    areas = ndimage.sum(mask, labels, index=np.arange(1, count + 1))
    found = []
    for index, region in enumerate(ndimage.find_objects(labels)):
        if region is None or areas[index] < min_area:
            continue
        ys, xs = region
        found.append(
            (
                float(areas[index]),
                BoundingBox(
                    cx=(xs.start + xs.stop) / (2.0 * width),
                    cy=(ys.start + ys.stop) / (2.0 * height),
                    w=(xs.stop - xs.start) / width,
                    h=(ys.stop - ys.start) / height,
                ),
            )
        )
    found.sort(key=lambda item: -item[0])
    return [box for _, box in found]


__all__ = ["VARIANCE_THRESHOLD", "detect_regions", "local_variance"]
