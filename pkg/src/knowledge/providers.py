from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import requests

from src.utils.text import canonicalize

from .prompts import DEFAULT_PROMPT_TEMPLATE, build_knowledge_prompt

LOGGER = logging.getLogger(__name__)

ENDPOINT_ENV = "PKNET_KNOWLEDGE_ENDPOINT"
TOKEN_ENV = "PKNET_KNOWLEDGE_TOKEN"
MODEL_ENV = "PKNET_KNOWLEDGE_MODEL"


class KnowledgeError(RuntimeError):
    pass


class ProviderKind(str, Enum):
    GLOSSARY = "glossary"
    REMOTE = "remote"


class KnowledgeSource(str, Enum):
    GLOSSARY = "glossary"
    REMOTE = "remote"
    CACHE = "cache"


@dataclass(frozen=True)
class KnowledgeText:
    text: str
    source: KnowledgeSource
    matched_terms: List[str] = field(default_factory=list)


class KnowledgeProvider:
    kind: ProviderKind

    def expand(self, expression: str) -> KnowledgeText:
        raise NotImplementedError


def _check_expression(expression: str) -> None:
    if not expression or not expression.strip():
        raise ValueError("Expression must not be empty")


class GlossaryProvider(KnowledgeProvider):
    """Offline provider: longest-match lookup of glossary terms in the expression."""

    kind = ProviderKind.GLOSSARY

    def __init__(self, glossary: Mapping[str, str]) -> None:
        entries: Dict[str, Tuple[str, str]] = {}
        for term, explanation in glossary.items():
            key = canonicalize(term)
            if key:
                entries[key] = (term, explanation.strip())
        self._entries = entries
        # longest keys first so "papillary structures" wins over "papillary"
        keys = sorted(entries, key=lambda key: (-len(key), key))
        self._pattern = (
            re.compile(r"(?<![a-z0-9])(?:" + "|".join(re.escape(key) for key in keys) + r")(?![a-z0-9])")
            if keys
            else None
        )

    @property
    def glossary(self) -> Dict[str, str]:
        return {term: explanation for term, explanation in self._entries.values()}

    def match(self, expression: str) -> List[str]:
        if self._pattern is None:
            return []
        matched: List[str] = []
        for hit in self._pattern.finditer(canonicalize(expression)):
            term = self._entries[hit.group(0)][0]
            if term not in matched:
                matched.append(term)
        return matched

    def expand(self, expression: str) -> KnowledgeText:
        _check_expression(expression)
        matched = self.match(expression)
        explanations = [self._entries[canonicalize(term)][1].rstrip(". ") for term in matched]
        text = ". ".join(part for part in explanations if part)
        return KnowledgeText(text=text, source=KnowledgeSource.GLOSSARY, matched_terms=matched)


class RemoteProvider(KnowledgeProvider):
    """Calls a text-generation endpoint: POST {"prompt"} -> {"text"}.

    Responses are cached per expression in memory and, when ``cache_path`` is
    given, appended to a JSONL file that is reloaded on construction.
    """

    kind = ProviderKind.REMOTE

    def __init__(
        self,
        endpoint: str,
        *,
        token: Optional[str] = None,
        model: Optional[str] = None,
        prompt_template: str = DEFAULT_PROMPT_TEMPLATE,
        cache_path: Optional[str | Path] = None,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 1.5,
    ) -> None:
        self.endpoint = endpoint
        self.token = token
        self.model = model
        self.prompt_template = prompt_template
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.cache_path = Path(cache_path) if cache_path else None
        self.calls = 0
        self._cache: Dict[str, str] = {}
        self._lock = threading.Lock()
        self._load_cache()

    def _load_cache(self) -> None:
        if self.cache_path is None or not self.cache_path.exists():
            return
        with self.cache_path.open("r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                    self._cache[entry["expression"]] = entry["text"]
                except (ValueError, KeyError, TypeError):
                    LOGGER.warning("Skipping malformed cache line %s:%d", self.cache_path, line_no)

    def _store(self, expression: str, text: str) -> None:
        self._cache[expression] = text
        if self.cache_path is None:
            return
        self.cache_path.parent.mkdir(parents=True, exist_ok=True)
        with self.cache_path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps({"expression": expression, "text": text}, ensure_ascii=False) + "\n")

    def _post(self, prompt: str) -> str:
        headers: Dict[str, str] = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        body: Dict[str, str] = {"prompt": prompt}
        if self.model:
            body["model"] = self.model
        try:
            resp = requests.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()
        except requests.RequestException as exc:
            raise KnowledgeError(f"Knowledge request failed: {exc}") from exc
        except ValueError as exc:
            raise KnowledgeError("Knowledge response is not valid JSON") from exc
        text = (data.get("text") or "").strip() if isinstance(data, dict) else ""
        if not text:
            raise KnowledgeError("Knowledge endpoint returned an empty response")
        return text

    def _generate(self, prompt: str) -> str:
        attempts = self.retries + 1
        for attempt in range(1, attempts + 1):
            self.calls += 1
            try:
                return self._post(prompt)
            except KnowledgeError as exc:
                LOGGER.warning("Attempt %s/%s failed for %s: %s", attempt, attempts, self.endpoint, exc)
                if attempt >= attempts:
                    raise
                time.sleep(self.backoff**attempt if self.backoff else 0)
        raise KnowledgeError(f"Exhausted retries for {self.endpoint}")

    def expand(self, expression: str) -> KnowledgeText:
        _check_expression(expression)
        # one request at a time; a repeated expression always hits the cache
        with self._lock:
            cached = self._cache.get(expression)
            if cached is not None:
                return KnowledgeText(text=cached, source=KnowledgeSource.CACHE)
            text = self._generate(build_knowledge_prompt(expression, self.prompt_template))
            self._store(expression, text)
        return KnowledgeText(text=text, source=KnowledgeSource.REMOTE)


def load_glossary(path: str | Path) -> Dict[str, str]:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise KnowledgeError(f"Cannot read glossary {path}: {exc}") from exc
    if not isinstance(payload, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in payload.items()
    ):
        raise KnowledgeError(f"Glossary {path} must be a flat JSON object of term -> explanation")
    return payload


def save_glossary(path: str | Path, glossary: Mapping[str, str]) -> None:
    Path(path).write_text(
        json.dumps(dict(glossary), indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_provider(
    *,
    glossary: Optional[str | Path] = None,
    endpoint: Optional[str] = None,
    cache_path: Optional[str | Path] = None,
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE,
) -> KnowledgeProvider:
    """Glossary file wins; otherwise the endpoint argument, then the environment."""
    if glossary:
        return GlossaryProvider(load_glossary(glossary))
    endpoint = endpoint or os.getenv(ENDPOINT_ENV)
    if not endpoint:
        raise KnowledgeError(f"No glossary given and {ENDPOINT_ENV} is not set")
    return RemoteProvider(
        endpoint,
        token=os.getenv(TOKEN_ENV),
        model=os.getenv(MODEL_ENV),
        prompt_template=prompt_template,
        cache_path=cache_path,
    )


__all__ = [
    "ENDPOINT_ENV",
    "MODEL_ENV",
    "TOKEN_ENV",
    "GlossaryProvider",
    "KnowledgeError",
    "KnowledgeProvider",
    "KnowledgeSource",
    "KnowledgeText",
    "ProviderKind",
    "RemoteProvider",
    "load_glossary",
    "load_provider",
    "save_glossary",
]
