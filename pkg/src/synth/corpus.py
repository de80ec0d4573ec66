"""Loading and summarising generated or externally annotated corpora."""
from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from src.domain import GroundingSample, Magnification, Split, ValidationError, build_sample, read_annotations
from src.utils.text import canonicalize, content_words

from .generator import ANNOTATIONS_FILE, MANIFEST_FILE, TERM_BANK_FILE, CorpusManifest
from .terms import TermBank

LOGGER = logging.getLogger(__name__)

HISTOGRAM_BINS = 10


def load_corpus(path: str | Path, *, require_manifest: bool = True) -> List[GroundingSample]:
    """Load and validate every sample under ``path``, sorted by image_id."""
    root = Path(path)
    if not root.is_dir():
        raise ValidationError(f"Corpus directory not found: {root}")
    if require_manifest and not (root / MANIFEST_FILE).exists():
        raise ValidationError(f"Corpus {root} has no {MANIFEST_FILE}")
    annotations = root / ANNOTATIONS_FILE
    if not annotations.exists():
        raise ValidationError(f"Corpus {root} has no {ANNOTATIONS_FILE}")

    known_terms: Optional[set[str]] = None
    if (root / TERM_BANK_FILE).exists():
        known_terms = set(TermBank.from_file(root / TERM_BANK_FILE).names())

    samples: List[GroundingSample] = []
    seen: set[str] = set()
    for record in read_annotations(annotations):
        if record.image_id in seen:
            raise ValidationError(f"Duplicate image_id in {annotations.name}: '{record.image_id}'")
        seen.add(record.image_id)
        if known_terms is not None:
            unknown = [term for term in record.terms if term not in known_terms]
            if unknown:
                raise ValidationError(f"record '{record.image_id}': terms not in the term bank: {unknown}")
        samples.append(build_sample(record, root))
    samples.sort(key=lambda sample: sample.image_id)
    LOGGER.info("Loaded %d samples from %s", len(samples), root)
    return samples


def load_manifest(path: str | Path) -> CorpusManifest:
    return CorpusManifest.from_file(Path(path) / MANIFEST_FILE)


def select_split(samples: Iterable[GroundingSample], split: Split | str) -> List[GroundingSample]:
    split = Split(split)
    return [sample for sample in samples if sample.split is split]


@dataclass
class CorpusStats:
    counts: Dict[str, Dict[str, int]]
    box_size_histogram: Dict[str, List[int]]
    top_words: List[Tuple[str, int]]
    top_terms: List[Tuple[str, int]] = field(default_factory=list)
    decoys: Dict[str, Dict[str, int]] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(sum(per_mag.values()) for per_mag in self.counts.values())

    def to_json(self) -> Dict[str, object]:
        return {
            "total": self.total,
            "counts": self.counts,
            "decoys": self.decoys,
            "box_size_histogram": {
                "bin_edges": [round(i / HISTOGRAM_BINS, 2) for i in range(HISTOGRAM_BINS + 1)],
                **self.box_size_histogram,
            },
            "top_words": [{"word": word, "count": count} for word, count in self.top_words],
            "top_terms": [{"term": term, "count": count} for term, count in self.top_terms],
        }

    def to_markdown(self) -> str:
        lines = ["| split | x40 | x20 | total | with decoy |", "|---|---|---|---|---|"]
        for split, per_mag in self.counts.items():
            x40, x20 = per_mag[Magnification.X40.value], per_mag[Magnification.X20.value]
            decoys = sum(self.decoys.get(split, {}).values())
            lines.append(f"| {split} | {x40} | {x20} | {x40 + x20} | {decoys} |")
        lines.append("")
        lines.append("| word | count |")
        lines.append("|---|---|")
        lines.extend(f"| {word} | {count} |" for word, count in self.top_words)
        if self.top_terms:
            lines.append("")
            lines.append("| term | count |")
            lines.append("|---|---|")
            lines.extend(f"| {term} | {count} |" for term, count in self.top_terms)
        return "\n".join(lines) + "\n"


def _ranked(counter: Counter, top_k: int) -> List[Tuple[str, int]]:
    return sorted(counter.items(), key=lambda item: (-item[1], item[0]))[:top_k]


def corpus_stats(
    samples: Sequence[GroundingSample], *, bank: Optional[TermBank] = None, top_k: int = 100
) -> CorpusStats:
    counts = {split.value: {mag.value: 0 for mag in Magnification} for split in Split}
    decoys = {split.value: {mag.value: 0 for mag in Magnification} for split in Split}
    histogram = {mag.value: [0] * HISTOGRAM_BINS for mag in Magnification}
    words: Counter = Counter()
    terms: Counter = Counter()
    bank_terms = (
        [(name, re.compile(rf"\b{re.escape(canonicalize(name))}\b")) for name in bank.names()]
        if bank is not None
        else []
    )

    for sample in samples:
        counts[sample.split.value][sample.magnification.value] += 1
        if sample.decoy is not None:
            decoys[sample.split.value][sample.magnification.value] += 1
        side = math.sqrt(sample.box.w * sample.box.h)
        histogram[sample.magnification.value][min(int(side * HISTOGRAM_BINS), HISTOGRAM_BINS - 1)] += 1
        words.update(content_words(sample.expression))
        if bank_terms:
            text = canonicalize(sample.expression)
            terms.update(name for name, pattern in bank_terms if pattern.search(text))

    return CorpusStats(
        counts=counts,
        box_size_histogram=histogram,
        top_words=_ranked(words, top_k),
        top_terms=_ranked(terms, top_k),
        decoys=decoys,
    )


__all__ = ["CorpusStats", "corpus_stats", "load_corpus", "load_manifest", "select_split"]
