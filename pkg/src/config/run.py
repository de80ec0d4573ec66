"""Run configuration: YAML document, environment and ``--set`` flags, with provenance."""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, MutableMapping, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic import ValidationError as SchemaError

from src.domain import STRIDE
from src.eval.metrics import EvalConfig
from src.knowledge.prompts import DEFAULT_PROMPT_TEMPLATE
from src.knowledge.providers import ENDPOINT_ENV, MODEL_ENV, TOKEN_ENV
from src.model.config import ModelConfig
from src.train.config import TrainConfig

RESOLVED_CONFIG_FILE = "resolved_config.yaml"
REDACTED = "***"


class RunConfigError(ValueError):
    pass


class Provenance(str, Enum):
    DEFAULT = "default"
    FILE = "file"
    ENV = "env"
    FLAG = "flag"


class DataConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    root: str = "data/corpus"
    seed: int = Field(default=0, ge=0)
    train_n: int = Field(default=512, ge=0)
    test_n: int = Field(default=128, ge=0)
    image_size: int = 256
    decoy_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    workers: int = Field(default=1, ge=1)

    @field_validator("image_size")
    @classmethod
    def _stride_multiple(cls, value: int) -> int:
        if value < 2 * STRIDE or value % STRIDE:
            raise ValueError(
                f"image_size {value} must be a multiple of {STRIDE} and at least {2 * STRIDE}; "
                f"try {max(2 * STRIDE, round(value / STRIDE) * STRIDE)}"
            )
        return value


class KnowledgeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    glossary: Optional[str] = None
    endpoint: Optional[str] = None
    token: Optional[str] = None
    model: Optional[str] = None
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    cache: Optional[str] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    data: DataConfig = DataConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    eval: EvalConfig = EvalConfig()
    knowledge: KnowledgeConfig = KnowledgeConfig()


SECTIONS: Tuple[str, ...] = tuple(RunConfig.model_fields)

# environment wins over the file, as with the other deployment secrets
ENV_KEYS: Dict[str, str] = {
    ENDPOINT_ENV: "knowledge.endpoint",
    TOKEN_ENV: "knowledge.token",
    MODEL_ENV: "knowledge.model",
}


@dataclass
class ResolvedConfig:
    config: RunConfig
    provenance: Dict[str, str] = field(default_factory=dict)

    def source_of(self, key: str) -> str:
        return self.provenance.get(key, Provenance.DEFAULT.value)

    def to_document(self) -> Dict[str, Any]:
        document = self.config.model_dump(mode="json")
        if document["knowledge"].get("token"):
            document["knowledge"]["token"] = REDACTED
        return {"config": document, "provenance": dict(sorted(self.provenance.items()))}


def _flatten(document: Mapping[str, Any], prefix: str = "") -> Iterable[Tuple[str, Any]]:
    for key, value in document.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping) and value:
            yield from _flatten(value, dotted + ".")
        else:
            yield dotted, value


def _assign(document: MutableMapping[str, Any], dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    if parts[0] not in SECTIONS:
        raise RunConfigError(f"Unknown config section '{parts[0]}' in '{dotted}' (sections: {', '.join(SECTIONS)})")
    node = document
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, MutableMapping):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def parse_override(text: str) -> Tuple[str, Any]:
    """``section.field=value``; the value is parsed as a YAML scalar."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key or "." not in key:
        raise RunConfigError(f"Override must look like section.field=value, got {text!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise RunConfigError(f"Cannot parse value in override {text!r}: {exc}") from exc
    return key, value


def load_config_file(config_path: str | Path) -> Dict[str, Any]:
    path = Path(config_path)
    if not path.exists():
        raise FileNotFoundError(f"Run configuration not found at {config_path}")
    with path.open("r", encoding="utf-8") as handle:
        data = yaml.safe_load(handle)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise RunConfigError(f"{path.name} must be a mapping with sections {', '.join(SECTIONS)}")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise RunConfigError(f"Unknown sections in {path.name}: {', '.join(unknown)}")
    return data


def resolve_run_config(
    config_path: str | Path | None = None,
    overrides: Iterable[str] = (),
    flags: Optional[Mapping[str, Any]] = None,
    env: Optional[Mapping[str, str]] = None,
) -> ResolvedConfig:
    """Merge defaults < file < environment < flags and validate the result.

    ``overrides`` are raw ``section.field=value`` strings; ``flags`` maps dotted
    keys to already-typed values from dedicated command-line options (None
    values are skipped).
    """
    env = os.environ if env is None else env
    document: Dict[str, Any] = RunConfig().model_dump(mode="json")
    provenance: Dict[str, str] = {}

    if config_path is not None:
        for key, value in _flatten(load_config_file(config_path)):
            _assign(document, key, copy.deepcopy(value))
            provenance[key] = Provenance.FILE.value

    for variable, key in ENV_KEYS.items():
        value = env.get(variable)
        if value:
            _assign(document, key, value)
            provenance[key] = Provenance.ENV.value

    for text in overrides:
        key, value = parse_override(text)
        _assign(document, key, value)
        provenance[key] = Provenance.FLAG.value

    for key, value in (flags or {}).items():
        if value is None:
            continue
        _assign(document, key, value.value if isinstance(value, Enum) else value)
        provenance[key] = Provenance.FLAG.value

    try:
        config = RunConfig.model_validate(document)
    except SchemaError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise RunConfigError(f"Invalid run configuration: {problems}") from exc
    return ResolvedConfig(config=config, provenance=provenance)


def write_resolved_config(resolved: ResolvedConfig, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RESOLVED_CONFIG_FILE
    path.write_text(yaml.safe_dump(resolved.to_document(), sort_keys=False), encoding="utf-8")
    return path


__all__ = [
    "RESOLVED_CONFIG_FILE",
    "SECTIONS",
    "DataConfig",
    "KnowledgeConfig",
    "Provenance",
    "ResolvedConfig",
    "RunConfig",
    "RunConfigError",
    "load_config_file",
    "parse_override",
    "resolve_run_config",
    "write_resolved_config",
]
