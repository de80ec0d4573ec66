"""Knowledge fusion over text tokens and cross-modal fusion with the [REG] token."""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .config import ConfigurationError, ModelConfig
from .encoders import PositionEmbedding2D, TokenFeatures, TokenRole, VisualFeatures, transformer_stack


class KnowledgeFusion(nn.Module):
    """Concatenate expression and knowledge tokens, then self-attend over both.

    With ``layers == 0`` the output is the plain concatenation.
    """

    def __init__(self, cfg: ModelConfig, layers: int) -> None:
        super().__init__()
        self.channels = cfg.c_e
        self.layers = layers
        self.encoder = transformer_stack(cfg.c_e, cfg, layers) if layers else None
        self.segment = nn.Embedding(2, cfg.c_e) if (layers and cfg.segment_embeddings) else None

    def forward(self, f_e: TokenFeatures, f_k: TokenFeatures) -> TokenFeatures:
        if f_e.channels != self.channels or f_k.channels != self.channels:
            raise ConfigurationError(
                f"Knowledge fusion expects {self.channels} channels, got {f_e.channels} and {f_k.channels}"
            )
        tokens = torch.cat([f_e.tokens, f_k.tokens], dim=1)
        pad_mask = torch.cat([f_e.pad_mask, f_k.pad_mask], dim=1)
        if self.encoder is not None:
            if self.segment is not None:
                segments = torch.cat(
                    [
                        torch.zeros(f_e.n_tokens, dtype=torch.long, device=tokens.device),
                        torch.ones(f_k.n_tokens, dtype=torch.long, device=tokens.device),
                    ]
                )
                tokens = tokens + self.segment(segments)
            tokens = self.encoder(tokens, src_key_padding_mask=pad_mask)
        return TokenFeatures(tokens=tokens, pad_mask=pad_mask, role=TokenRole.FUSED)


class BoxHead(nn.Module):
    def __init__(self, dim: int, layers: int) -> None:
        super().__init__()
        blocks = []
        for _ in range(layers - 1):
            blocks += [nn.Linear(dim, dim), nn.ReLU(inplace=True)]
        blocks.append(nn.Linear(dim, 4))
        self.mlp = nn.Sequential(*blocks)

    def forward(self, x: Tensor) -> Tensor:
        return self.mlp(x).sigmoid()


@dataclass
class GroundingOutput:
    boxes: Tensor
    reg: Tensor
    sequence_length: int


class CrossModalFusion(nn.Module):
    """Project both modalities to C_p, prepend [REG], encode, regress a box from [REG]."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.visual_proj = nn.Linear(cfg.c_v, cfg.c_p)
        self.text_proj = nn.Linear(cfg.c_e, cfg.c_p)
        self.reg_token = nn.Parameter(torch.zeros(1, 1, cfg.c_p))
        self.visual_position = PositionEmbedding2D(cfg.max_grid, cfg.c_p)
        self.encoder = transformer_stack(cfg.c_p, cfg, cfg.cfm_layers)
        self.head = BoxHead(cfg.c_p, cfg.head_layers)
        nn.init.normal_(self.reg_token, std=0.02)

    def forward(self, f_v: VisualFeatures, f_l: TokenFeatures) -> GroundingOutput:
        batch = f_v.tokens.shape[0]
        p_v = self.visual_proj(f_v.tokens) + self.visual_position(f_v.height, f_v.width)
        p_l = self.text_proj(f_l.tokens)
        reg = self.reg_token.expand(batch, -1, -1)
        sequence = torch.cat([reg, p_v, p_l], dim=1)
        visible = torch.zeros(batch, 1 + f_v.n_tokens, dtype=torch.bool, device=sequence.device)
        pad_mask = torch.cat([visible, f_l.pad_mask], dim=1)
        encoded = self.encoder(sequence, src_key_padding_mask=pad_mask)
        reg_out = encoded[:, 0]
        return GroundingOutput(boxes=self.head(reg_out), reg=reg_out, sequence_length=sequence.shape[1])


__all__ = ["BoxHead", "CrossModalFusion", "GroundingOutput", "KnowledgeFusion"]
