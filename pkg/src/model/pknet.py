"""PKNet: visual branch, shared text encoder, knowledge fusion and cross-modal grounding."""
from __future__ import annotations

import logging
from typing import List, Optional, Sequence

import numpy as np
import torch
from torch import Tensor, nn
from tqdm import tqdm

from src.domain import GroundingSample
from src.eval.metrics import Prediction
from src.geometry import MIN_SIDE, BoundingBox

from .config import AblationMode, ConfigurationError, ModelConfig
from .data import EncodedSample, collate, encode_sample, standardize
from .encoders import TextEncoder, TokenFeatures, TokenRole, VisualEncoder, VisualFeatures
from .fusion import CrossModalFusion, GroundingOutput, KnowledgeFusion
from .vocab import TextBatch, Vocabulary

LOGGER = logging.getLogger(__name__)


class PKNet(nn.Module):
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary) -> None:
        super().__init__()
        if cfg.vocab_size != len(vocab):
            cfg = cfg.model_copy(update={"vocab_size": len(vocab)})
        self.cfg = cfg
        self.vocab = vocab
        self.mode = cfg.ablation_mode
        self.visual = VisualEncoder(cfg)
        self.text = TextEncoder(cfg)
        self.kfm = KnowledgeFusion(cfg, cfg.effective_kfm_layers) if self.mode.uses_branch else None
        self.cfm = CrossModalFusion(cfg)

    def encode_image(self, images: Tensor) -> VisualFeatures:
        return self.visual(images)

    def encode_text(self, text: TextBatch, role: TokenRole = TokenRole.EXPRESSION) -> TokenFeatures:
        return self.text(text.ids, text.pad_mask, role)

    def fuse_knowledge(self, f_e: TokenFeatures, f_k: TokenFeatures) -> TokenFeatures:
        if self.kfm is None:
            raise ConfigurationError(f"Mode '{self.mode.value}' has no knowledge branch")
        return self.kfm(f_e, f_k)

    def language_features(self, text: TextBatch, knowledge: Optional[TextBatch]) -> TokenFeatures:
        f_e = self.encode_text(text, TokenRole.EXPRESSION)
        if not self.mode.uses_branch:
            return f_e
        if knowledge is None:
            raise ConfigurationError(f"Mode '{self.mode.value}' needs knowledge tokens")
        f_k = self.encode_text(knowledge, TokenRole.KNOWLEDGE)
        return self.fuse_knowledge(f_e, f_k)

    def forward(self, images: Tensor, text: TextBatch, knowledge: Optional[TextBatch] = None) -> GroundingOutput:
        f_v = self.encode_image(images)
        f_l = self.language_features(text, knowledge)
        return self.cfm(f_v, f_l)

    @property
    def device(self) -> torch.device:
        return next(self.parameters()).device

    @torch.no_grad()
    def _predict_one(self, encoded: EncodedSample) -> BoundingBox:
        batch = collate([encoded]).to(self.device)
        was_training = self.training
        self.eval()
        try:
            output = self(batch.images, batch.text, batch.knowledge)
        finally:
            self.train(was_training)
        return tensor_to_box(output.boxes[0])

    def predict(self, sample: GroundingSample) -> BoundingBox:
        return self._predict_one(encode_sample(sample, self.vocab, self.mode, self.cfg.max_text_tokens))

    def predict_image(self, image: np.ndarray, expression: str, knowledge: Optional[str] = None) -> BoundingBox:
        """Ground ``expression`` in a uint8 (3, H, W) image."""
        if self.mode.requires_knowledge and knowledge is None:
            raise ConfigurationError(f"Mode '{self.mode.value}' requires knowledge text")
        if self.mode is AblationMode.CONCAT_TEXT:
            text, knowledge = f"{expression} {knowledge}".strip(), None
        elif not self.mode.uses_branch:
            text, knowledge = expression, None
        else:
            text = expression
        max_tokens = self.cfg.max_text_tokens
        encoded = EncodedSample(
            image_id="input",
            image=standardize(image),
            text=self.vocab.encode(text, max_tokens),
            knowledge=self.vocab.encode_knowledge(knowledge, max_tokens) if knowledge is not None else None,
            box=torch.zeros(4),
        )
        return self._predict_one(encoded)


def tensor_to_box(values: Tensor) -> BoundingBox:
    """Read a sigmoid head output as a valid box."""
    cx, cy, w, h = (float(v) for v in values.detach().double().cpu())
    return BoundingBox(cx=cx, cy=cy, w=max(w, 2 * MIN_SIDE), h=max(h, 2 * MIN_SIDE))


@torch.no_grad()
def predict_samples(
    model: PKNet, samples: Sequence[GroundingSample], *, batch_size: int = 32, progress: bool = False
) -> List[Prediction]:
    was_training = model.training
    model.eval()
    predictions: List[Prediction] = []
    try:
        starts = range(0, len(samples), batch_size)
        for start in tqdm(starts, desc="Predicting", disable=not progress):
            chunk = samples[start : start + batch_size]
            batch = collate(
                [encode_sample(s, model.vocab, model.mode, model.cfg.max_text_tokens) for s in chunk]
            ).to(model.device)
            output = model(batch.images, batch.text, batch.knowledge)
            predictions.extend(
                Prediction(image_id=image_id, box=tensor_to_box(box))
                for image_id, box in zip(batch.image_ids, output.boxes)
            )
    finally:
        model.train(was_training)
    return predictions


__all__ = ["PKNet", "predict_samples", "tensor_to_box"]
