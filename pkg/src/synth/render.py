"""Ellipse-field cell textures for the synthetic pathology crops.

Background tissue is a jittered grid of pale, low-contrast cells. Atypical
regions are cleared and refilled with dark cells whose size, eccentricity,
spacing and colour come from the describing terms' parameters, clipped to
the region's pixel-aligned box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

from src.domain import Magnification

from .terms import TextureParams

STROMA_RGB: Tuple[int, int, int] = (232, 200, 220)
BACKGROUND_CELL_RGB: Tuple[int, int, int] = (186, 142, 190)
NOISE_SIGMA = 4.0
_ELLIPSE_VERTICES = 16


@dataclass(frozen=True)
class CellField:
    """Base cell radius and grid spacing in pixels."""

    radius: float
    spacing: float


def cell_field(magnification: Magnification, image_size: int) -> CellField:
    # x40 crops show few large cells, x20 crops many small ones
    if magnification is Magnification.X40:
        return CellField(radius=image_size / 40.0, spacing=image_size / 12.0)
    return CellField(radius=image_size / 85.0, spacing=image_size / 28.0)


@dataclass(frozen=True)
class PixelBox:
    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def separated_from(self, other: "PixelBox", gap: int) -> bool:
        return (
            self.x1 + gap <= other.x0
            or other.x1 + gap <= self.x0
            or self.y1 + gap <= other.y0
            or other.y1 + gap <= self.y0
        )


def _ellipse_polygon(
    cx: float, cy: float, a: float, b: float, theta: float
) -> Sequence[Tuple[float, float]]:
    angles = np.linspace(0.0, 2.0 * math.pi, _ELLIPSE_VERTICES, endpoint=False)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    xs = a * np.cos(angles)
    ys = b * np.sin(angles)
    return [
        (float(cx + x * cos_t - y * sin_t), float(cy + x * sin_t + y * cos_t))
        for x, y in zip(xs, ys)
    ]


def _jittered_grid(rng: np.random.Generator, width: int, height: int, spacing: float) -> np.ndarray:
    offset = rng.uniform(0.0, spacing, size=2)
    xs = np.arange(-spacing + offset[0], width + spacing, spacing)
    ys = np.arange(-spacing + offset[1], height + spacing, spacing)
    grid = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    jitter = rng.uniform(-0.3 * spacing, 0.3 * spacing, size=grid.shape)
    return grid + jitter


def _jitter_color(rng: np.random.Generator, rgb: Tuple[int, int, int], amount: int) -> Tuple[int, int, int]:
    shifted = np.asarray(rgb) + rng.integers(-amount, amount + 1, size=3)
    return tuple(int(v) for v in np.clip(shifted, 0, 255))  # type: ignore[return-value]


def draw_cells(
    draw: ImageDraw.ImageDraw,
    rng: np.random.Generator,
    width: int,
    height: int,
    *,
    radius: float,
    spacing: float,
    eccentricity: float,
    color: Tuple[int, int, int],
    hollow: bool = False,
    color_jitter: int = 8,
) -> None:
    minor_ratio = math.sqrt(1.0 - eccentricity**2)
    for cx, cy in _jittered_grid(rng, width, height, spacing):
        a = radius * rng.uniform(0.85, 1.15)
        b = a * minor_ratio
        theta = rng.uniform(0.0, math.pi)
        fill = _jitter_color(rng, color, color_jitter)
        polygon = _ellipse_polygon(cx, cy, a, b, theta)
        if hollow:
            draw.polygon(polygon, outline=fill, width=max(2, int(round(a / 2.5))))
        else:
            draw.polygon(polygon, fill=fill)


def render_background(
    rng: np.random.Generator, image_size: int, magnification: Magnification
) -> Image.Image:
    field = cell_field(magnification, image_size)
    image = Image.new("RGB", (image_size, image_size), STROMA_RGB)
    draw_cells(
        ImageDraw.Draw(image),
        rng,
        image_size,
        image_size,
        radius=field.radius * 0.8,
        spacing=field.spacing,
        eccentricity=0.3,
        color=BACKGROUND_CELL_RGB,
        color_jitter=6,
    )
    return image


def render_region(
    image: Image.Image,
    rng: np.random.Generator,
    box: PixelBox,
    params: TextureParams,
    magnification: Magnification,
) -> None:
    """Replace ``box`` with an atypical cell field described by ``params``."""
    field = cell_field(magnification, image.width)
    layer = Image.new("RGB", (box.width, box.height), STROMA_RGB)
    draw_cells(
        ImageDraw.Draw(layer),
        rng,
        box.width,
        box.height,
        radius=field.radius * params.radius_scale,
        spacing=field.spacing * params.spacing_scale * 0.8,
        eccentricity=params.eccentricity,
        color=params.color,
        hollow=params.hollow,
    )
    image.paste(layer, (box.x0, box.y0))


def add_noise(image: Image.Image, rng: np.random.Generator, sigma: float = NOISE_SIGMA) -> Image.Image:
    pixels = np.asarray(image, dtype=np.float64)
    noisy = pixels + rng.normal(0.0, sigma, size=pixels.shape)
    return Image.fromarray(np.clip(np.rint(noisy), 0, 255).astype(np.uint8), mode="RGB")


__all__ = [
    "BACKGROUND_CELL_RGB",
    "STROMA_RGB",
    "CellField",
    "PixelBox",
    "add_noise",
    "cell_field",
    "draw_cells",
    "render_background",
    "render_region",
]
