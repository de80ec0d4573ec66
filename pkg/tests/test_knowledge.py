from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Dict, Iterator, List

import pytest

from src.knowledge import (
    DEFAULT_PROMPT_TEMPLATE,
    ExpansionError,
    GlossaryProvider,
    KnowledgeError,
    KnowledgeProvider,
    KnowledgeSource,
    KnowledgeText,
    RemoteProvider,
    build_knowledge_prompt,
    expand,
    expand_corpus,
    load_glossary,
    load_provider,
    save_glossary,
)
from src.synth import load_corpus
from src.synth.generator import ANNOTATIONS_FILE, GLOSSARY_FILE


class StubEndpoint:
    """Local HTTP endpoint answering {"prompt"} with {"text"}; can fail the first N calls."""

    def __init__(self) -> None:
        self.requests: List[Dict[str, Any]] = []
        self.fail_first = 0
        self.status = 500
        self.reply = "dense dark cells"
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                stub.requests.append({"body": body, "auth": self.headers.get("Authorization")})
                if len(stub.requests) <= stub.fail_first:
                    self.send_response(stub.status)
                    self.end_headers()
                    return
                payload = json.dumps({"text": stub.reply}).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *_args: Any) -> None:
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/generate"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def endpoint() -> Iterator[StubEndpoint]:
    stub = StubEndpoint()
    yield stub
    stub.close()


GLOSSARY = {
    "papillary": "short fronds",
    "papillary structures": "finger-like fronds with fibrovascular cores",
    "solid nests": "tightly packed rounded clusters of cells.",
}


def test_glossary_longest_match() -> None:
    result = expand(GlossaryProvider(GLOSSARY), "tumor cells forming papillary structures")
    assert result.text == "finger-like fronds with fibrovascular cores"
    assert result.matched_terms == ["papillary structures"]
    assert result.source is KnowledgeSource.GLOSSARY


def test_glossary_expression_order_and_join() -> None:
    provider = GlossaryProvider(GLOSSARY)
    result = provider.expand("Solid Nests and papillary structures, then papillary tips")
    assert result.matched_terms == ["solid nests", "papillary structures", "papillary"]
    assert result.text == (
        "tightly packed rounded clusters of cells. finger-like fronds with fibrovascular cores. short fronds"
    )


def test_glossary_insertion_order_does_not_matter() -> None:
    reordered = dict(reversed(list(GLOSSARY.items())))
    expression = "cells with solid nests showing papillary structures"
    assert GlossaryProvider(GLOSSARY).expand(expression) == GlossaryProvider(reordered).expand(expression)


def test_glossary_no_hits_is_empty_text() -> None:
    result = GlossaryProvider(GLOSSARY).expand("normal stroma")
    assert result.text == ""
    assert result.matched_terms == []


def test_glossary_matches_whole_words_only() -> None:
    assert GlossaryProvider({"nests": "x"}).match("cells with nestsy areas") == []


def test_empty_expression_rejected() -> None:
    with pytest.raises(ValueError):
        GlossaryProvider(GLOSSARY).expand("  ")


def test_prompt_template() -> None:
    prompt = build_knowledge_prompt("  tumor cells with solid nests ", DEFAULT_PROMPT_TEMPLATE)
    assert prompt.endswith("one sentence per term: tumor cells with solid nests")
    with pytest.raises(ValueError, match="placeholder"):
        build_knowledge_prompt("cells", "no placeholder here")


def test_remote_provider_caches(endpoint: StubEndpoint, tmp_path: Path) -> None:
    cache = tmp_path / "cache.jsonl"
    provider = RemoteProvider(endpoint.url, token="secret", model="m1", cache_path=cache, backoff=0)
    first = provider.expand("cells with solid nests")
    second = provider.expand("cells with solid nests")
    assert first.source is KnowledgeSource.REMOTE
    assert second.source is KnowledgeSource.CACHE
    assert first.text == second.text == "dense dark cells"
    assert len(endpoint.requests) == 1
    request = endpoint.requests[0]
    assert request["auth"] == "Bearer secret"
    assert request["body"]["model"] == "m1"
    assert request["body"]["prompt"].endswith("cells with solid nests")

    reloaded = RemoteProvider(endpoint.url, cache_path=cache, backoff=0)
    assert reloaded.expand("cells with solid nests").source is KnowledgeSource.CACHE
    assert reloaded.calls == 0
    assert len(endpoint.requests) == 1


def test_remote_provider_calls_at_most_once_per_expression(endpoint: StubEndpoint) -> None:
    provider = RemoteProvider(endpoint.url, backoff=0)
    expressions = ["a cells", "b cells", "a cells", "c cells", "b cells"]
    for expression in expressions:
        provider.expand(expression)
    assert len(endpoint.requests) == len(set(expressions))


def test_remote_provider_retries(endpoint: StubEndpoint) -> None:
    endpoint.fail_first = 2
    provider = RemoteProvider(endpoint.url, retries=2, backoff=0)
    assert provider.expand("cells").text == "dense dark cells"
    assert provider.calls == 3


def test_remote_provider_gives_up(endpoint: StubEndpoint) -> None:
    endpoint.fail_first = 10
    provider = RemoteProvider(endpoint.url, retries=1, backoff=0)
    with pytest.raises(KnowledgeError, match="Knowledge request failed"):
        provider.expand("cells")
    assert len(endpoint.requests) == 2


def test_remote_provider_empty_response(endpoint: StubEndpoint) -> None:
    endpoint.reply = "   "
    with pytest.raises(KnowledgeError, match="empty response"):
        RemoteProvider(endpoint.url, retries=0, backoff=0).expand("cells")


def test_unreachable_endpoint() -> None:
    provider = RemoteProvider("http://127.0.0.1:9/generate", retries=0, backoff=0, timeout=2)
    with pytest.raises(KnowledgeError):
        provider.expand("cells")


def test_load_provider(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    monkeypatch.delenv("PKNET_KNOWLEDGE_ENDPOINT", raising=False)
    with pytest.raises(KnowledgeError, match="PKNET_KNOWLEDGE_ENDPOINT"):
        load_provider()

    path = tmp_path / "glossary.json"
    save_glossary(path, GLOSSARY)
    assert load_glossary(path) == GLOSSARY
    assert isinstance(load_provider(glossary=path), GlossaryProvider)

    monkeypatch.setenv("PKNET_KNOWLEDGE_ENDPOINT", "http://example.invalid/generate")
    monkeypatch.setenv("PKNET_KNOWLEDGE_TOKEN", "t0k")
    provider = load_provider()
    assert isinstance(provider, RemoteProvider)
    assert provider.endpoint == "http://example.invalid/generate"
    assert provider.token == "t0k"


def test_load_glossary_rejects_nested_values(tmp_path: Path) -> None:
    path = tmp_path / "glossary.json"
    path.write_text(json.dumps({"term": {"nested": "x"}}), encoding="utf-8")
    with pytest.raises(KnowledgeError, match="flat JSON object"):
        load_glossary(path)


def test_expand_corpus_populates_and_is_idempotent(corpus_copy: Path) -> None:
    provider = GlossaryProvider(load_glossary(corpus_copy / GLOSSARY_FILE))
    annotations = corpus_copy / ANNOTATIONS_FILE
    expanded = expand_corpus(provider, load_corpus(corpus_copy), annotations_path=annotations, progress=False)
    assert all(sample.knowledge for sample in expanded)

    reloaded = load_corpus(corpus_copy)
    assert [s.knowledge for s in reloaded] == [s.knowledge for s in expanded]
    before = annotations.read_bytes()

    class Exploding(KnowledgeProvider):
        def expand(self, expression: str) -> KnowledgeText:
            raise AssertionError("populated samples must not be expanded again")

    expand_corpus(Exploding(), reloaded, annotations_path=annotations, progress=False)
    assert annotations.read_bytes() == before


def test_expand_corpus_failure_lists_pending_and_writes_nothing(corpus_copy: Path) -> None:
    annotations = corpus_copy / ANNOTATIONS_FILE
    before = annotations.read_bytes()
    samples = load_corpus(corpus_copy)

    class FailsAfterTwo(KnowledgeProvider):
        def __init__(self) -> None:
            self.calls = 0

        def expand(self, expression: str) -> KnowledgeText:
            self.calls += 1
            if self.calls > 2:
                raise KnowledgeError("endpoint unreachable")
            return KnowledgeText(text="dark cells", source=KnowledgeSource.REMOTE)

    with pytest.raises(ExpansionError) as info:
        expand_corpus(FailsAfterTwo(), samples, annotations_path=annotations, progress=False)
    assert info.value.image_id == samples[2].image_id
    assert info.value.pending == [s.image_id for s in samples[2:]]
    assert annotations.read_bytes() == before


def test_expand_corpus_force_reexpands(tiny_samples) -> None:
    provider = GlossaryProvider({"cells": "round shapes"})
    refreshed = expand_corpus(provider, tiny_samples, force=True, progress=False)
    assert all(sample.knowledge == "round shapes" for sample in refreshed)
