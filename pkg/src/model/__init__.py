"""Grounding network, its inputs and checkpoints."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import AblationMode, Backbone, ConfigurationError, ModelConfig
from .data import GroundingBatch, GroundingDataset, collate, encode_sample, model_texts, standardize
from .encoders import TextEncoder, TokenFeatures, TokenRole, VisualEncoder, VisualFeatures
from .fusion import CrossModalFusion, GroundingOutput, KnowledgeFusion
from .pknet import PKNet, predict_samples, tensor_to_box
from .vocab import TextBatch, Vocabulary, build_vocabulary, pad_batch

__all__ = [
    "AblationMode",
    "Backbone",
    "Checkpoint",
    "ConfigurationError",
    "CrossModalFusion",
    "GroundingBatch",
    "GroundingDataset",
    "GroundingOutput",
    "KnowledgeFusion",
    "ModelConfig",
    "PKNet",
    "TextBatch",
    "TextEncoder",
    "TokenFeatures",
    "TokenRole",
    "VisualEncoder",
    "VisualFeatures",
    "Vocabulary",
    "build_vocabulary",
    "collate",
    "encode_sample",
    "load_checkpoint",
    "model_texts",
    "pad_batch",
    "predict_samples",
    "save_checkpoint",
    "standardize",
    "tensor_to_box",
]
