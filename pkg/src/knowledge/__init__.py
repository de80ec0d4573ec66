"""Knowledge expansion: explicit visual descriptions for pathological terms."""

from .expand import ExpansionError, expand, expand_corpus
from .prompts import DEFAULT_PROMPT_TEMPLATE, build_knowledge_prompt
from .providers import (
    GlossaryProvider,
    KnowledgeError,
    KnowledgeProvider,
    KnowledgeSource,
    KnowledgeText,
    ProviderKind,
    RemoteProvider,
    load_glossary,
    load_provider,
    save_glossary,
)

__all__ = [
    "DEFAULT_PROMPT_TEMPLATE",
    "ExpansionError",
    "GlossaryProvider",
    "KnowledgeError",
    "KnowledgeProvider",
    "KnowledgeSource",
    "KnowledgeText",
    "ProviderKind",
    "RemoteProvider",
    "build_knowledge_prompt",
    "expand",
    "expand_corpus",
    "load_glossary",
    "load_provider",
    "save_glossary",
]
