"""Synthetic surrogate corpus: term bank, textures, generator, loader and detector."""

from .corpus import CorpusStats, corpus_stats, load_corpus, load_manifest, select_split
from .detector import detect_regions
from .generator import (
    CorpusManifest,
    GenerationError,
    ManifestError,
    default_manifest,
    generate_corpus,
    split_counts,
)
from .terms import Affinity, Term, TermBank, TextureParams, default_term_bank

__all__ = [
    "Affinity",
    "CorpusManifest",
    "CorpusStats",
    "GenerationError",
    "ManifestError",
    "Term",
    "TermBank",
    "TextureParams",
    "corpus_stats",
    "default_manifest",
    "default_term_bank",
    "detect_regions",
    "generate_corpus",
    "load_corpus",
    "load_manifest",
    "select_split",
    "split_counts",
]
