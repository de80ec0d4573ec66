"""Word-level tokenizer and the corpus-derived vocabulary."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import torch

from src.domain import GroundingSample
from src.utils.text import tokenize_words

from .config import ConfigurationError

PAD = "[PAD]"
UNK = "[UNK]"
EMPTY = "[EMPTY]"
SPECIALS = (PAD, UNK, EMPTY)
PAD_ID = 0


@dataclass(frozen=True)
class EncodedText:
    ids: List[int]
    truncated: bool = False


@dataclass
class TextBatch:
    """Right-padded ids with ``pad_mask`` True at padding positions."""

    ids: torch.Tensor
    pad_mask: torch.Tensor

    def to(self, device: torch.device | str) -> "TextBatch":
        return TextBatch(self.ids.to(device), self.pad_mask.to(device))


class Vocabulary:
    def __init__(self, words: Iterable[str]) -> None:
        unique = sorted({word for word in words if word and word not in SPECIALS})
        self._itos: List[str] = list(SPECIALS) + unique
        self._stoi: Dict[str, int] = {word: i for i, word in enumerate(self._itos)}

    def __len__(self) -> int:
        return len(self._itos)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    def __contains__(self, word: str) -> bool:
        return word in self._stoi

    def words(self) -> List[str]:
        return list(self._itos)

    def encode(self, text: str, max_tokens: int) -> EncodedText:
        words = tokenize_words(text)
        if not words:
            raise ConfigurationError(f"Text is empty after tokenization: {text!r}")
        unk = self._stoi[UNK]
        ids = [self._stoi.get(word, unk) for word in words]
        return EncodedText(ids=ids[:max_tokens], truncated=len(ids) > max_tokens)

    def encode_knowledge(self, text: str, max_tokens: int) -> EncodedText:
        """Like ``encode`` but maps text with no words to the single [EMPTY] token."""
        if not tokenize_words(text):
            return EncodedText(ids=[self._stoi[EMPTY]])
        return self.encode(text, max_tokens)

    def decode(self, ids: Sequence[int]) -> str:
        return " ".join(self._itos[i] for i in ids if i != PAD_ID)

    def to_json(self) -> List[str]:
        return list(self._itos)

    @classmethod
    def from_json(cls, words: Sequence[str]) -> "Vocabulary":
        if list(words[: len(SPECIALS)]) != list(SPECIALS):
            raise ConfigurationError("Vocabulary does not start with the special tokens")
        vocab = cls(())
        vocab._itos = list(words)
        vocab._stoi = {word: i for i, word in enumerate(vocab._itos)}
        return vocab


def pad_batch(encoded: Sequence[EncodedText]) -> TextBatch:
    length = max(len(item.ids) for item in encoded)
    ids = torch.full((len(encoded), length), PAD_ID, dtype=torch.long)
    for row, item in enumerate(encoded):
        ids[row, : len(item.ids)] = torch.tensor(item.ids, dtype=torch.long)
    return TextBatch(ids=ids, pad_mask=ids.eq(PAD_ID))


def build_vocabulary(
    samples: Iterable[GroundingSample], glossary: Optional[Mapping[str, str]] = None
) -> Vocabulary:
    words: List[str] = []
    for sample in samples:
        words.extend(tokenize_words(sample.expression))
        if sample.knowledge:
            words.extend(tokenize_words(sample.knowledge))
    for term, explanation in (glossary or {}).items():
        words.extend(tokenize_words(term))
        words.extend(tokenize_words(explanation))
    return Vocabulary(words)


__all__ = [
    "EMPTY",
    "PAD",
    "PAD_ID",
    "UNK",
    "EncodedText",
    "TextBatch",
    "Vocabulary",
    "build_vocabulary",
    "pad_batch",
]
