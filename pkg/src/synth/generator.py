"""Deterministic procedural generator for the surrogate grounding corpus."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic import ValidationError as SchemaError
from tqdm import tqdm

from src.domain import (
    STRIDE,
    AnnotationRecord,
    BoxPayload,
    Magnification,
    Split,
    write_annotations,
    write_text_atomic,
)
from src.geometry import BoundingBox
from src.utils.text import derive_seed

from .render import PixelBox, add_noise, render_background, render_region
from .terms import HEAD_NOUNS, Term, TermBank, default_term_bank, merge_params

LOGGER = logging.getLogger(__name__)

GENERATOR_VERSION = "1.1"
IMAGES_DIR = "images"
ANNOTATIONS_FILE = "annotations.jsonl"
MANIFEST_FILE = "manifest.json"
GLOSSARY_FILE = "glossary.json"
TERM_BANK_FILE = "term_bank.json"

# box side ranges as fractions of the image side
BOX_SIDE_RANGE: Dict[Magnification, Tuple[float, float]] = {
    Magnification.X40: (0.25, 0.45),
    Magnification.X20: (0.22, 0.40),
}
EDGE_MARGIN = 0.04
DECOY_GAP = 0.08
_PLACEMENT_ATTEMPTS = 200

_CLAUSE_TEMPLATES: Tuple[str, ...] = ("with {}", "showing {}", "forming {}", "displaying {}", "exhibiting {}")


class ManifestError(ValueError):
    """Raised when a corpus manifest is invalid or does not fit the term bank."""


class GenerationError(RuntimeError):
    """Raised when the corpus cannot be written."""


class CorpusManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(ge=0, lt=2**64)
    counts: Dict[Split, Dict[Magnification, int]]
    image_size: int = 256
    generator_version: str = GENERATOR_VERSION
    decoy_fraction: float = Field(default=0.5, ge=0.0, le=1.0)

    @field_validator("image_size")
    @classmethod
    def _divisible(cls, value: int) -> int:
        if value < 2 * STRIDE or value % STRIDE:
            raise ValueError(
                f"image size {value} must be a multiple of {STRIDE} and at least {2 * STRIDE}; "
                f"try {max(2 * STRIDE, round(value / STRIDE) * STRIDE)}"
            )
        return value

    @field_validator("counts")
    @classmethod
    def _non_negative(cls, value: Dict[Split, Dict[Magnification, int]]) -> Dict[Split, Dict[Magnification, int]]:
        for split, per_mag in value.items():
            for mag, count in per_mag.items():
                if count < 0:
                    raise ValueError(f"count for {split.value}/{mag.value} must be >= 0, got {count}")
        return value

    def count(self, split: Split, magnification: Magnification) -> int:
        return self.counts.get(split, {}).get(magnification, 0)

    @property
    def total(self) -> int:
        return sum(self.count(split, mag) for split in Split for mag in Magnification)

    def to_json(self) -> Dict[str, object]:
        return {
            "seed": self.seed,
            "counts": {
                split.value: {mag.value: self.count(split, mag) for mag in Magnification}
                for split in Split
            },
            "image_size": self.image_size,
            "generator_version": self.generator_version,
            "decoy_fraction": self.decoy_fraction,
        }

    @classmethod
    def from_file(cls, path: str | Path) -> "CorpusManifest":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            return cls.model_validate(payload)
        except (OSError, json.JSONDecodeError, SchemaError) as exc:
            raise ManifestError(f"Invalid manifest {path}: {exc}") from exc


def split_counts(train_n: int, test_n: int) -> Dict[Split, Dict[Magnification, int]]:
    """Spread per-split totals evenly over the magnifications (x40 gets the odd one)."""
    counts: Dict[Split, Dict[Magnification, int]] = {}
    for split, total in ((Split.TRAIN, train_n), (Split.TEST, test_n)):
        if total < 0:
            raise ManifestError(f"{split.value} count must be >= 0, got {total}")
        counts[split] = {Magnification.X40: total - total // 2, Magnification.X20: total // 2}
    return counts


def default_manifest(seed: int = 0, train_n: int = 512, test_n: int = 128, **kwargs: object) -> CorpusManifest:
    return CorpusManifest(seed=seed, counts=split_counts(train_n, test_n), **kwargs)  # type: ignore[arg-type]


@dataclass(frozen=True)
class SampleSpec:
    image_id: str
    split: Split
    magnification: Magnification


def sample_specs(manifest: CorpusManifest) -> Iterator[SampleSpec]:
    for split in Split:
        for mag in Magnification:
            for index in range(manifest.count(split, mag)):
                yield SampleSpec(f"{split.value}-{mag.value}-{index:05d}", split, mag)


def _pick_terms(
    rng: np.random.Generator, pool: Sequence[Term], shared: Sequence[Term], count: int, exclude: Sequence[str] = ()
) -> List[Term]:
    """First term from the magnification pool, the rest from pool plus shared terms."""
    primary = [t for t in pool if t.term not in exclude]
    first = primary[int(rng.integers(len(primary)))]
    rest = [t for t in list(pool) + list(shared) if t.term != first.term and t.term not in exclude]
    order = rng.permutation(len(rest))[: count - 1]
    return [first] + [rest[int(i)] for i in order]


def build_expression(rng: np.random.Generator, terms: Sequence[Term]) -> str:
    head = HEAD_NOUNS[int(rng.integers(len(HEAD_NOUNS)))]
    clauses = [
        _CLAUSE_TEMPLATES[int(rng.integers(len(_CLAUSE_TEMPLATES)))].format(term.term)
        for term in (terms[int(i)] for i in rng.permutation(len(terms)))
    ]
    if len(clauses) == 1:
        return f"{head} {clauses[0]}"
    return f"{head} {', '.join(clauses[:-1])} and {clauses[-1]}"


def _random_box(rng: np.random.Generator, size: int, magnification: Magnification) -> PixelBox:
    low, high = BOX_SIDE_RANGE[magnification]
    margin = int(round(EDGE_MARGIN * size))
    width = int(round(rng.uniform(low, high) * size))
    height = int(round(rng.uniform(low, high) * size))
    x0 = int(rng.integers(margin, size - margin - width + 1))
    y0 = int(rng.integers(margin, size - margin - height + 1))
    return PixelBox(x0, y0, x0 + width, y0 + height)


def _place_decoy(rng: np.random.Generator, size: int, magnification: Magnification, target: PixelBox) -> Optional[PixelBox]:
    gap = int(round(DECOY_GAP * size))
    for _ in range(_PLACEMENT_ATTEMPTS):
        candidate = _random_box(rng, size, magnification)
        if candidate.separated_from(target, gap):
            return candidate
    return None


def _split_pair(rng: np.random.Generator, size: int, magnification: Magnification) -> Tuple[PixelBox, PixelBox]:
    """Target and decoy in opposite halves of the image; always separated by the decoy gap."""
    low, high = BOX_SIDE_RANGE[magnification]
    margin = int(round(EDGE_MARGIN * size))
    half_gap = (int(round(DECOY_GAP * size)) + 1) // 2
    half = size // 2
    room = half - half_gap - margin

    def one(first_half: bool) -> Tuple[int, int, int, int]:
        along = int(round(rng.uniform(low, high) * size))
        along = max(1, min(along, room))
        across = int(round(rng.uniform(low, high) * size))
        if first_half:
            a0 = int(rng.integers(margin, half - half_gap - along + 1))
        else:
            a0 = int(rng.integers(half + half_gap, size - margin - along + 1))
        c0 = int(rng.integers(margin, size - margin - across + 1))
        return a0, along, c0, across

    target_first = bool(rng.random() < 0.5)
    horizontal = bool(rng.random() < 0.5)
    boxes = []
    for first_half in (target_first, not target_first):
        a0, along, c0, across = one(first_half)
        if horizontal:
            boxes.append(PixelBox(a0, c0, a0 + along, c0 + across))
        else:
            boxes.append(PixelBox(c0, a0, c0 + across, a0 + along))
    return boxes[0], boxes[1]


def place_decoy(
    rng: np.random.Generator, size: int, magnification: Magnification, target: PixelBox, image_id: str = ""
) -> Tuple[PixelBox, PixelBox]:
    """Separated decoy for ``target``; re-draws both in split halves when sampling fails.

    Returns the (possibly re-drawn) target and the decoy.
    """
    decoy = _place_decoy(rng, size, magnification, target)
    if decoy is not None:
        return target, decoy
    LOGGER.debug("Decoy sampling failed for %s; re-drawing target and decoy in split halves", image_id)
    return _split_pair(rng, size, magnification)


def pixel_box_to_bbox(box: PixelBox, size: int) -> BoundingBox:
    return BoundingBox(
        cx=(box.x0 + box.x1) / (2.0 * size),
        cy=(box.y0 + box.y1) / (2.0 * size),
        w=box.width / size,
        h=box.height / size,
    )


def render_sample(
    spec: SampleSpec, manifest: CorpusManifest, bank: TermBank, images_dir: Path
) -> AnnotationRecord:
    """Render one sample to ``images_dir`` and return its annotation record."""
    rng = np.random.default_rng(derive_seed(manifest.seed, spec.image_id))
    size = manifest.image_size
    pool, shared = bank.for_magnification(spec.magnification)

    n_terms = int(rng.integers(2, 4))
    terms = _pick_terms(rng, pool, shared, n_terms)
    expression = build_expression(rng, terms)

    target = _random_box(rng, size, spec.magnification)
    decoy: Optional[PixelBox] = None
    if rng.random() < manifest.decoy_fraction:
        target, decoy = place_decoy(rng, size, spec.magnification, target, spec.image_id)

    image = render_background(rng, size, spec.magnification)
    render_region(image, rng, target, merge_params(terms), spec.magnification)
    if decoy is not None:
        names = [t.term for t in terms]
        decoy_terms = _pick_terms(rng, pool, shared, n_terms, exclude=names)
        render_region(image, rng, decoy, merge_params(decoy_terms), spec.magnification)
    image = add_noise(image, rng)

    image_file = f"{IMAGES_DIR}/{spec.image_id}.png"
    image.save(images_dir / f"{spec.image_id}.png", format="PNG")

    box = pixel_box_to_bbox(target, size)
    return AnnotationRecord(
        image_id=spec.image_id,
        image_file=image_file,
        expression=expression,
        knowledge=None,
        box=BoxPayload(**box.to_json()),
        magnification=spec.magnification,
        split=spec.split,
        terms=[t.term for t in terms],
        decoy=BoxPayload(**pixel_box_to_bbox(decoy, size).to_json()) if decoy is not None else None,
    )


def _render_star(args: Tuple[SampleSpec, CorpusManifest, TermBank, Path]) -> AnnotationRecord:
    return render_sample(*args)


def generate_corpus(
    manifest: CorpusManifest,
    out_dir: str | Path,
    bank: Optional[TermBank] = None,
    *,
    workers: int = 1,
    progress: bool = True,
) -> Path:
    """Write images, annotations, glossary, term bank and manifest under ``out_dir``."""
    bank = bank or default_term_bank()
    if manifest.generator_version != GENERATOR_VERSION:
        raise ManifestError(
            f"Manifest asks for generator {manifest.generator_version}, this is {GENERATOR_VERSION}"
        )
    try:
        bank.check_generatable()
    except ValueError as exc:
        raise ManifestError(str(exc)) from exc

    out_dir = Path(out_dir)
    images_dir = out_dir / IMAGES_DIR
    try:
        images_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise GenerationError(f"Cannot create output directory {out_dir}: {exc}") from exc

    specs = list(sample_specs(manifest))
    LOGGER.info("Generating %d samples into %s (seed=%d)", len(specs), out_dir, manifest.seed)
    jobs = [(spec, manifest, bank, images_dir) for spec in specs]
    try:
        if workers > 1 and len(specs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                records = list(
                    tqdm(pool.map(_render_star, jobs, chunksize=8), total=len(jobs), desc="Rendering", disable=not progress)
                )
        else:
            records = [_render_star(job) for job in tqdm(jobs, desc="Rendering", disable=not progress)]

        records.sort(key=lambda record: record.image_id)
        write_annotations(out_dir / ANNOTATIONS_FILE, records)
        write_text_atomic(
            out_dir / GLOSSARY_FILE,
            json.dumps(bank.glossary(), indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        )
        bank.to_file(out_dir / TERM_BANK_FILE)
        write_text_atomic(out_dir / MANIFEST_FILE, json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise GenerationError(f"Failed writing corpus to {out_dir}: {exc}") from exc

    decoys = sum(1 for record in records if record.decoy is not None)
    LOGGER.info(
        "Wrote %d annotations (%d with decoys, fraction %.3f requested) to %s",
        len(records),
        decoys,
        manifest.decoy_fraction,
        out_dir / ANNOTATIONS_FILE,
    )
    return out_dir


__all__ = [
    "ANNOTATIONS_FILE",
    "GENERATOR_VERSION",
    "GLOSSARY_FILE",
    "IMAGES_DIR",
    "MANIFEST_FILE",
    "TERM_BANK_FILE",
    "CorpusManifest",
    "GenerationError",
    "ManifestError",
    "SampleSpec",
    "build_expression",
    "default_manifest",
    "generate_corpus",
    "pixel_box_to_bbox",
    "place_decoy",
    "render_sample",
    "sample_specs",
    "split_counts",
]
