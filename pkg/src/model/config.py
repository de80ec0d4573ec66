"""Network hyperparameters and the knowledge ablation switch."""
from __future__ import annotations

import json
from enum import Enum
from typing import Any, Dict

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.utils.text import mkhash

KFM_LAYERS = 2


class ConfigurationError(ValueError):
    """Raised for invalid model inputs or configurations that do not fit together."""


class AblationMode(str, Enum):
    NONE = "none"
    CONCAT_TEXT = "concat_text"
    BRANCH = "branch"
    BRANCH_KFM = "branch_kfm"

    @classmethod
    def parse(cls, value: "str | AblationMode") -> "AblationMode":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower().replace("-", "_"))

    @property
    def requires_knowledge(self) -> bool:
        return self is not AblationMode.NONE

    @property
    def uses_branch(self) -> bool:
        return self in (AblationMode.BRANCH, AblationMode.BRANCH_KFM)

    @property
    def cli_name(self) -> str:
        return self.value.replace("_", "-")


class Backbone(str, Enum):
    DESK = "desk"
    RESNET50 = "resnet50"


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    c_v: int = Field(default=256, ge=1)
    c_e: int = Field(default=256, ge=1)
    c_p: int = Field(default=256, ge=1)
    visual_layers: int = Field(default=6, ge=0)
    text_layers: int = Field(default=4, ge=0)
    kfm_layers: int = KFM_LAYERS
    cfm_layers: int = Field(default=6, ge=1)
    heads: int = Field(default=8, ge=1)
    ffn_dim: int = Field(default=1024, ge=1)
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    max_text_tokens: int = Field(default=64, ge=1)
    max_grid: int = Field(default=64, ge=1)
    vocab_size: int = Field(default=0, ge=0)
    head_layers: int = Field(default=3, ge=1)
    backbone: Backbone = Backbone.DESK
    segment_embeddings: bool = False
    ablation_mode: AblationMode = AblationMode.BRANCH_KFM

    @model_validator(mode="before")
    @classmethod
    def _normalize_mode(cls, data: Any) -> Any:
        if isinstance(data, dict) and isinstance(data.get("ablation_mode"), str):
            data = dict(data)
            data["ablation_mode"] = AblationMode.parse(data["ablation_mode"])
        return data

    @model_validator(mode="after")
    def _check(self) -> "ModelConfig":
        for name in ("c_v", "c_e", "c_p"):
            if getattr(self, name) % self.heads:
                raise ValueError(f"{name}={getattr(self, name)} is not divisible by heads={self.heads}")
        if self.ablation_mode is AblationMode.BRANCH_KFM and self.kfm_layers != KFM_LAYERS:
            raise ValueError(f"branch_kfm uses exactly {KFM_LAYERS} fusion layers, got {self.kfm_layers}")
        return self

    @property
    def effective_kfm_layers(self) -> int:
        return self.kfm_layers if self.ablation_mode is AblationMode.BRANCH_KFM else 0

    def to_json(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        return mkhash(json.dumps(self.to_json(), sort_keys=True))[:16]


__all__ = ["KFM_LAYERS", "AblationMode", "Backbone", "ConfigurationError", "ModelConfig"]
