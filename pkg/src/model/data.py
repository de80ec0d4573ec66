"""Torch dataset and batching for grounding samples."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import Tensor
from torch.utils.data import Dataset

from src.domain import GroundingSample

from .config import AblationMode, ConfigurationError
from .vocab import EncodedText, TextBatch, Vocabulary, pad_batch


def standardize(image: np.ndarray) -> Tensor:
    """uint8 (3, H, W) -> float32 with zero mean and unit variance per channel."""
    pixels = torch.from_numpy(np.asarray(image, dtype=np.float32))
    mean = pixels.mean(dim=(1, 2), keepdim=True)
    std = pixels.std(dim=(1, 2), keepdim=True)
    return (pixels - mean) / (std + 1e-6)


def model_texts(sample: GroundingSample, mode: AblationMode) -> Tuple[str, Optional[str]]:
    """(text for the expression branch, text for the knowledge branch) under ``mode``."""
    if mode is AblationMode.NONE:
        return sample.expression, None
    if sample.knowledge is None:
        raise ConfigurationError(
            f"Sample '{sample.image_id}' has no knowledge text but mode '{mode.value}' requires it"
        )
    if mode is AblationMode.CONCAT_TEXT:
        return f"{sample.expression} {sample.knowledge}".strip(), None
    return sample.expression, sample.knowledge


@dataclass
class EncodedSample:
    image_id: str
    image: Tensor
    text: EncodedText
    knowledge: Optional[EncodedText]
    box: Tensor


@dataclass
class GroundingBatch:
    image_ids: List[str]
    images: Tensor
    text: TextBatch
    knowledge: Optional[TextBatch]
    boxes: Tensor

    def to(self, device: torch.device | str) -> "GroundingBatch":
        return GroundingBatch(
            image_ids=self.image_ids,
            images=self.images.to(device),
            text=self.text.to(device),
            knowledge=self.knowledge.to(device) if self.knowledge is not None else None,
            boxes=self.boxes.to(device),
        )


def encode_sample(
    sample: GroundingSample,
    vocab: Vocabulary,
    mode: AblationMode,
    max_tokens: int,
    image: Optional[Tensor] = None,
) -> EncodedSample:
    text, knowledge = model_texts(sample, mode)
    return EncodedSample(
        image_id=sample.image_id,
        image=image if image is not None else standardize(sample.load_image()),
        text=vocab.encode(text, max_tokens),
        knowledge=vocab.encode_knowledge(knowledge, max_tokens) if knowledge is not None else None,
        box=torch.tensor(sample.box.as_tuple(), dtype=torch.float32),
    )


class GroundingDataset(Dataset):
    def __init__(
        self,
        samples: Sequence[GroundingSample],
        vocab: Vocabulary,
        mode: AblationMode,
        max_tokens: int,
        *,
        cache_images: bool = True,
    ) -> None:
        self.samples = list(samples)
        self.vocab = vocab
        self.mode = mode
        self.max_tokens = max_tokens
        self.cache_images = cache_images
        self._images: Dict[int, Tensor] = {}
        for sample in self.samples:
            model_texts(sample, mode)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> EncodedSample:
        image = self._images.get(index)
        if image is None:
            image = standardize(self.samples[index].load_image())
            if self.cache_images:
                self._images[index] = image
        return encode_sample(self.samples[index], self.vocab, self.mode, self.max_tokens, image=image)


def collate(items: Sequence[EncodedSample]) -> GroundingBatch:
    shapes = {tuple(item.image.shape) for item in items}
    if len(shapes) != 1:
        raise ConfigurationError(f"Images in one batch must share a size, got {sorted(shapes)}")
    has_knowledge = [item.knowledge is not None for item in items]
    if any(has_knowledge) and not all(has_knowledge):
        raise ConfigurationError("Batch mixes samples with and without knowledge text")
    return GroundingBatch(
        image_ids=[item.image_id for item in items],
        images=torch.stack([item.image for item in items]),
        text=pad_batch([item.text for item in items]),
        knowledge=pad_batch([item.knowledge for item in items]) if all(has_knowledge) else None,  # type: ignore[misc]
        boxes=torch.stack([item.box for item in items]),
    )


__all__ = [
    "EncodedSample",
    "GroundingBatch",
    "GroundingDataset",
    "collate",
    "encode_sample",
    "model_texts",
    "standardize",
]
