"""Populate the knowledge field of a corpus through a provider."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Sequence

from tqdm import tqdm

from src.domain import GroundingSample, write_annotations

from .providers import KnowledgeError, KnowledgeProvider, KnowledgeText

LOGGER = logging.getLogger(__name__)


class ExpansionError(KnowledgeError):
    """A provider failure during corpus expansion; nothing was written."""

    def __init__(self, message: str, image_id: str, pending: Sequence[str]) -> None:
        super().__init__(message)
        self.image_id = image_id
        self.pending = list(pending)


def expand(provider: KnowledgeProvider, expression: str) -> KnowledgeText:
    return provider.expand(expression)


def expand_corpus(
    provider: KnowledgeProvider,
    samples: Sequence[GroundingSample],
    *,
    annotations_path: Optional[str | Path] = None,
    force: bool = False,
    progress: bool = True,
) -> List[GroundingSample]:
    """Return samples with knowledge filled in.

    Samples that already carry knowledge are kept unless ``force`` is set.
    When ``annotations_path`` is given and anything changed, the whole file is
    rewritten atomically; a provider failure leaves it untouched and reports
    every image_id still pending.
    """
    todo = [i for i, sample in enumerate(samples) if force or sample.knowledge is None]
    if not todo:
        LOGGER.info("All %d samples already carry knowledge; nothing to do", len(samples))
        return list(samples)

    expanded = list(samples)
    for position, index in enumerate(tqdm(todo, desc="Expanding", disable=not progress)):
        sample = samples[index]
        try:
            knowledge = provider.expand(sample.expression)
        except KnowledgeError as exc:
            pending = [samples[i].image_id for i in todo[position:]]
            raise ExpansionError(
                f"Knowledge expansion failed at '{sample.image_id}' ({len(pending)} pending: "
                f"{', '.join(pending)}): {exc}",
                sample.image_id,
                pending,
            ) from exc
        expanded[index] = sample.with_knowledge(knowledge.text)

    changed = any(new.knowledge != old.knowledge for new, old in zip(expanded, samples))
    if annotations_path is not None and changed:
        write_annotations(annotations_path, (sample.to_record() for sample in expanded))
        LOGGER.info("Wrote %d annotations to %s", len(expanded), annotations_path)
    return expanded


__all__ = ["ExpansionError", "expand", "expand_corpus"]
