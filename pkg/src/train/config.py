from __future__ import annotations

import json
from typing import Any, Dict

from pydantic import BaseModel, ConfigDict, Field

from src.geometry.losses import LossConfig
from src.utils.text import mkhash

FULL_SCALE_LEARNING_RATE = 1e-5
FULL_SCALE_EPOCHS = 90


class TrainConfig(BaseModel):
    """Optimization recipe. Defaults are the desk-scale values, see FULL_SCALE_* for the large-data run."""

    model_config = ConfigDict(extra="forbid")

    lr: float = Field(default=1e-4, ge=0.0)
    epochs: int = Field(default=60, ge=1)
    batch_size: int = Field(default=16, ge=1)
    weight_decay: float = Field(default=1e-4, ge=0.0)
    grad_clip: float = Field(default=0.1, ge=0.0)
    seed: int = 0
    loss: LossConfig = LossConfig()
    checkpoint_every: int = Field(default=10, ge=0)
    eval_every: int = Field(default=0, ge=0)
    freeze_text_epochs: int = Field(default=0, ge=0)
    deterministic: bool = True
    num_workers: int = Field(default=0, ge=0)
    device: str = "auto"

    def to_json(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def config_hash(self) -> str:
        return mkhash(json.dumps(self.to_json(), sort_keys=True))[:16]


__all__ = ["FULL_SCALE_EPOCHS", "FULL_SCALE_LEARNING_RATE", "TrainConfig"]
