"""Versioned checkpoint container: config, vocabulary, weights, optimizer and RNG state."""
from __future__ import annotations

import logging
import os
import random
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import torch

from .config import ConfigurationError, ModelConfig
from .pknet import PKNet
from .vocab import Vocabulary

LOGGER = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pknet-checkpoint"
CHECKPOINT_VERSION = 1


def capture_rng_state() -> Dict[str, Any]:
    state: Dict[str, Any] = {
        "python": random.getstate(),
        "numpy": np.random.get_state(),
        "torch": torch.get_rng_state(),
    }
    if torch.cuda.is_available():
        state["cuda"] = torch.cuda.get_rng_state_all()
    return state


def restore_rng_state(state: Dict[str, Any]) -> None:
    random.setstate(state["python"])
    np.random.set_state(state["numpy"])
    torch.set_rng_state(state["torch"])
    if "cuda" in state and torch.cuda.is_available():
        torch.cuda.set_rng_state_all(state["cuda"])


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocabulary
    state_dict: Dict[str, torch.Tensor]
    epoch: int = 0
    optimizer_state: Optional[Dict[str, Any]] = None
    rng_state: Optional[Dict[str, Any]] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def build_model(self, device: torch.device | str = "cpu") -> PKNet:
        model = PKNet(self.config, self.vocab)
        model.load_state_dict(self.state_dict)
        return model.to(device)


def save_checkpoint(
    path: str | Path,
    model: PKNet,
    *,
    epoch: int,
    optimizer: Optional[torch.optim.Optimizer] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.cfg.to_json(),
        "vocab": model.vocab.to_json(),
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "rng": capture_rng_state(),
        "epoch": epoch,
        "extra": extra or {},
    }
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        torch.save(payload, tmp_name)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    LOGGER.info("Saved checkpoint for epoch %d to %s", epoch, path)
    return path


def _config_diff(stored: ModelConfig, expected: ModelConfig) -> Dict[str, Any]:
    a, b = stored.to_json(), expected.to_json()
    # vocab_size follows the stored vocabulary
    return {key: (a.get(key), b.get(key)) for key in sorted(set(a) | set(b)) if key != "vocab_size" and a.get(key) != b.get(key)}


def load_checkpoint(
    path: str | Path,
    *,
    expected_config: Optional[ModelConfig] = None,
    map_location: str | torch.device = "cpu",
) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found at {path}")
    # checkpoints carry numpy/python RNG state, so the full unpickler is required
    payload = torch.load(path, map_location=map_location, weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(
            f"{path} has checkpoint version {payload.get('version')}, expected {CHECKPOINT_VERSION}"
        )
    config = ModelConfig.model_validate(payload["config"])
    if expected_config is not None:
        diff = _config_diff(config, expected_config)
        if diff:
            details = ", ".join(f"{key}: checkpoint={old!r} requested={new!r}" for key, (old, new) in diff.items())
            raise ConfigurationError(f"Checkpoint {path} does not match the requested model config ({details})")
    return Checkpoint(
        config=config,
        vocab=Vocabulary.from_json(payload["vocab"]),
        state_dict=payload["state_dict"],
        epoch=int(payload.get("epoch", 0)),
        optimizer_state=payload.get("optimizer"),
        rng_state=payload.get("rng"),
        extra=payload.get("extra") or {},
    )


__all__ = [
    "CHECKPOINT_FORMAT",
    "CHECKPOINT_VERSION",
    "Checkpoint",
    "capture_rng_state",
    "load_checkpoint",
    "restore_rng_state",
    "save_checkpoint",
]
