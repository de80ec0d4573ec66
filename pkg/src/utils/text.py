"""Utility helpers for working with text, hashing and derived seeds."""
from __future__ import annotations

import hashlib
import re
import unicodedata
from typing import List

WORD_RE = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*")

STOPWORDS = frozenset(
    {
        "a", "an", "and", "are", "as", "at", "by", "for", "from", "in", "into", "is",
        "it", "its", "of", "on", "or", "the", "their", "this", "to", "with", "within",
        "showing", "forming", "displaying", "exhibiting", "containing", "composed",
    }
)


def canonicalize(text: str) -> str:
    """Lowercase and normalize spacing/punctuation for stable matching."""
    if not text:
        return ""
    normalized = unicodedata.normalize("NFKC", text)
    normalized = normalized.replace("\u00A0", " ").replace("\u200b", "")
    normalized = normalized.replace("\u2019", "'").replace("\u2018", "'")
    normalized = normalized.replace("\u2013", "-").replace("\u2014", "-")
    normalized = re.sub(r"\s+", " ", normalized)
    return normalized.strip().lower()


def tokenize_words(text: str) -> List[str]:
    """Split on whitespace and punctuation, keeping hyphenated words whole."""
    return WORD_RE.findall(canonicalize(text))


def content_words(text: str) -> List[str]:
    return [word for word in tokenize_words(text) if word not in STOPWORDS]


def mkhash(*parts: str) -> str:
    """Build a deterministic hash from the given string parts."""
    joined = "|".join(part or "" for part in parts)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()


def derive_seed(seed: int, key: str) -> int:
    """64-bit seed derived from a base seed and a string key."""
    return int(mkhash(str(seed), key)[:16], 16)
