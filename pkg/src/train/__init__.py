"""Optimization recipe and training loop."""

from .config import TrainConfig
from .loop import (
    EpochRecord,
    TrainLog,
    TrainResult,
    TrainingError,
    evaluate_during_training,
    seed_everything,
    train,
)

__all__ = [
    "EpochRecord",
    "TrainConfig",
    "TrainLog",
    "TrainResult",
    "TrainingError",
    "evaluate_during_training",
    "seed_everything",
    "train",
]
