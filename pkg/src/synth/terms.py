"""Pathological term bank driving both expressions and rendered textures."""
from __future__ import annotations

import json
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.domain import Magnification


class Affinity(str, Enum):
    X40 = "x40"
    X20 = "x20"
    BOTH = "both"


class TextureParams(BaseModel):
    """Cell-field parameters relative to the magnification's background texture."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    radius_scale: float = Field(default=1.0, gt=0)
    eccentricity: float = Field(default=0.0, ge=0, lt=1)
    spacing_scale: float = Field(default=1.0, gt=0)
    color: Tuple[int, int, int] = (70, 30, 100)
    hollow: bool = False


class Term(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    term: str = Field(min_length=1)
    affinity: Affinity
    visual_params: TextureParams = TextureParams()
    glossary_entry: str = Field(min_length=1)


class TermBank(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    terms: List[Term]

    @model_validator(mode="after")
    def _unique_terms(self) -> "TermBank":
        seen = set()
        for term in self.terms:
            key = term.term.lower()
            if key in seen:
                raise ValueError(f"Duplicate term in bank: {term.term!r}")
            seen.add(key)
        return self

    def by_affinity(self, affinity: Affinity) -> List[Term]:
        return [term for term in self.terms if term.affinity is affinity]

    def for_magnification(self, magnification: Magnification) -> Tuple[List[Term], List[Term]]:
        """Return (affinity terms, shared terms) usable at this magnification."""
        return self.by_affinity(Affinity(magnification.value)), self.by_affinity(Affinity.BOTH)

    def lookup(self, name: str) -> Term:
        for term in self.terms:
            if term.term == name:
                return term
        raise KeyError(f"Term not in bank: {name!r}")

    def names(self) -> List[str]:
        return [term.term for term in self.terms]

    def glossary(self) -> Dict[str, str]:
        return {term.term: term.glossary_entry for term in self.terms}

    def check_generatable(self, minimum: int = 4) -> None:
        for affinity in Affinity:
            count = len(self.by_affinity(affinity))
            if count < minimum:
                raise ValueError(
                    f"Term bank needs at least {minimum} '{affinity.value}' terms, found {count}"
                )

    @classmethod
    def from_file(cls, path: str | Path) -> "TermBank":
        with Path(path).open("r", encoding="utf-8") as handle:
            return cls.model_validate(json.load(handle))

    def to_file(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.model_dump(mode="json"), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )


def merge_params(terms: Iterable[Term]) -> TextureParams:
    """Combine the visual parameters of the terms describing one region."""
    params = [term.visual_params for term in terms]
    if not params:
        return TextureParams()
    return TextureParams(
        radius_scale=sum(p.radius_scale for p in params) / len(params),
        eccentricity=max(p.eccentricity for p in params),
        spacing_scale=min(p.spacing_scale for p in params),
        color=tuple(min(p.color[i] for p in params) for i in range(3)),  # type: ignore[arg-type]
        hollow=any(p.hollow for p in params),
    )


HEAD_NOUNS: Tuple[str, ...] = ("tumor cells", "atypical cells", "neoplastic cells")

_DEFAULT_TERMS: List[Tuple[str, Affinity, dict, str]] = [
    # structure and growth, seen at high magnification
    ("papillary structures", Affinity.X40,
     {"radius_scale": 1.1, "eccentricity": 0.6, "spacing_scale": 0.9, "color": (60, 25, 95)},
     "finger-like fronds with fibrovascular cores"),
    ("irregular nuclei", Affinity.X40,
     {"radius_scale": 1.3, "eccentricity": 0.45, "spacing_scale": 1.0, "color": (55, 20, 80)},
     "nuclei with uneven angular outlines and variable size"),
    ("enlarged nucleoli", Affinity.X40,
     {"radius_scale": 1.5, "eccentricity": 0.1, "spacing_scale": 1.0, "color": (75, 25, 110)},
     "prominent dark dots inside swollen round nuclei"),
    ("alveolar spaces", Affinity.X40,
     {"radius_scale": 1.4, "eccentricity": 0.2, "spacing_scale": 0.95, "color": (80, 35, 120), "hollow": True},
     "round hollow spaces rimmed by a single layer of cells"),
    ("glandular lumens", Affinity.X40,
     {"radius_scale": 1.6, "eccentricity": 0.3, "spacing_scale": 1.0, "color": (90, 30, 90), "hollow": True},
     "ring-shaped cell clusters around a clear central opening"),
    # arrangement and interaction with neighbours, seen at low magnification
    ("infiltrative growth", Affinity.X20,
     {"radius_scale": 1.0, "eccentricity": 0.75, "spacing_scale": 0.8, "color": (65, 20, 85)},
     "irregular elongated cords of cells invading the surrounding stroma"),
    ("solid nests", Affinity.X20,
     {"radius_scale": 1.2, "eccentricity": 0.05, "spacing_scale": 0.7, "color": (50, 20, 90)},
     "tightly packed rounded clusters of cells without spaces"),
    ("cribriform arrangement", Affinity.X20,
     {"radius_scale": 1.3, "eccentricity": 0.1, "spacing_scale": 0.85, "color": (85, 30, 115), "hollow": True},
     "sheets of cells perforated by many small punched-out holes"),
    ("single-file pattern", Affinity.X20,
     {"radius_scale": 0.9, "eccentricity": 0.85, "spacing_scale": 0.75, "color": (70, 25, 75)},
     "cells lined up in thin linear strands"),
    ("crowded sheets", Affinity.X20,
     {"radius_scale": 1.1, "eccentricity": 0.2, "spacing_scale": 0.6, "color": (60, 30, 105)},
     "dense overlapping cells filling the whole area"),
    # shared cytology, seen at both magnifications
    ("hyperchromatic nuclei", Affinity.BOTH,
     {"radius_scale": 1.1, "eccentricity": 0.2, "spacing_scale": 1.0, "color": (35, 10, 60)},
     "nuclei staining much darker than the surrounding cells"),
    ("pleomorphic cells", Affinity.BOTH,
     {"radius_scale": 1.25, "eccentricity": 0.5, "spacing_scale": 0.95, "color": (70, 30, 95)},
     "cells varying strongly in size and shape"),
    ("mitotic figures", Affinity.BOTH,
     {"radius_scale": 0.9, "eccentricity": 0.3, "spacing_scale": 0.9, "color": (40, 15, 50)},
     "dividing cells with dark condensed chromatin"),
    ("high nuclear-cytoplasmic ratio", Affinity.BOTH,
     {"radius_scale": 1.35, "eccentricity": 0.15, "spacing_scale": 0.85, "color": (60, 20, 100)},
     "large nuclei occupying most of each cell"),
]


def default_term_bank() -> TermBank:
    return TermBank(
        terms=[
            Term(
                term=name,
                affinity=affinity,
                visual_params=TextureParams(**params),
                glossary_entry=entry,
            )
            for name, affinity, params, entry in _DEFAULT_TERMS
        ]
    )


__all__ = [
    "HEAD_NOUNS",
    "Affinity",
    "Term",
    "TermBank",
    "TextureParams",
    "default_term_bank",
    "merge_params",
]
