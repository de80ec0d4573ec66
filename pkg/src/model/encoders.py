"""Visual branch and the shared text encoder."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import torch
from torch import Tensor, nn

from src.domain import STRIDE

from .config import Backbone, ConfigurationError, ModelConfig


class TokenRole(str, Enum):
    EXPRESSION = "expression"
    KNOWLEDGE = "knowledge"
    FUSED = "fused"


@dataclass
class VisualFeatures:
    """Batch-first visual tokens (B, N_v, C_v) from an H_v x W_v grid."""

    tokens: Tensor
    height: int
    width: int

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[1]

    @property
    def channels(self) -> int:
        return self.tokens.shape[2]

    def matrix(self, index: int = 0) -> Tensor:
        """Channels-by-tokens matrix of one batch element."""
        return self.tokens[index].transpose(0, 1)


@dataclass
class TokenFeatures:
    """Batch-first text tokens (B, N, C) with ``pad_mask`` True at padding."""

    tokens: Tensor
    pad_mask: Tensor
    role: TokenRole

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[1]

    @property
    def channels(self) -> int:
        return self.tokens.shape[2]

    def matrix(self, index: int = 0) -> Tensor:
        return self.tokens[index].transpose(0, 1)


def transformer_stack(dim: int, cfg: ModelConfig, layers: int) -> nn.TransformerEncoder:
    layer = nn.TransformerEncoderLayer(
        d_model=dim,
        nhead=cfg.heads,
        dim_feedforward=cfg.ffn_dim,
        dropout=cfg.dropout,
        batch_first=True,
    )
    return nn.TransformerEncoder(layer, num_layers=layers, enable_nested_tensor=False)


def _norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(8, channels), channels)


def _conv_block(c_in: int, c_out: int, stride: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, kernel_size=3, stride=stride, padding=1, bias=False),
        _norm(c_out),
        nn.ReLU(inplace=True),
        nn.Conv2d(c_out, c_out, kernel_size=3, stride=1, padding=1, bias=False),
        _norm(c_out),
        nn.ReLU(inplace=True),
    )


class ConvBackbone(nn.Module):
    """Four-stage convolutional stack, strides 4, 2, 2, 2."""

    def __init__(self, c_out: int) -> None:
        super().__init__()
        widths = [max(8, c_out // 8), max(8, c_out // 4), max(8, c_out // 2), c_out]
        self.stem = nn.Sequential(
            nn.Conv2d(3, widths[0], kernel_size=7, stride=4, padding=3, bias=False),
            _norm(widths[0]),
            nn.ReLU(inplace=True),
        )
        self.stages = nn.Sequential(
            _conv_block(widths[0], widths[1], 2),
            _conv_block(widths[1], widths[2], 2),
            _conv_block(widths[2], widths[3], 2),
        )

    def forward(self, images: Tensor) -> Tensor:
        return self.stages(self.stem(images))


class ResNetBackbone(nn.Module):
    """ResNet-50 trunk (random init) with a 1x1 projection to ``c_out`` channels."""

    def __init__(self, c_out: int) -> None:
        super().__init__()
        from torchvision.models import resnet50

        trunk = resnet50(weights=None)
        self.body = nn.Sequential(*list(trunk.children())[:-2])
        self.proj = nn.Conv2d(2048, c_out, kernel_size=1)

    def forward(self, images: Tensor) -> Tensor:
        return self.proj(self.body(images))


class PositionEmbedding2D(nn.Module):
    """Learned additive row/column embeddings for a flattened grid."""

    def __init__(self, max_grid: int, dim: int) -> None:
        super().__init__()
        self.max_grid = max_grid
        self.row = nn.Embedding(max_grid, dim)
        self.col = nn.Embedding(max_grid, dim)
        nn.init.normal_(self.row.weight, std=0.02)
        nn.init.normal_(self.col.weight, std=0.02)

    def forward(self, height: int, width: int) -> Tensor:
        if height > self.max_grid or width > self.max_grid:
            raise ConfigurationError(
                f"Feature grid {height}x{width} exceeds max_grid={self.max_grid}"
            )
        device = self.row.weight.device
        rows = self.row(torch.arange(height, device=device))
        cols = self.col(torch.arange(width, device=device))
        return (rows[:, None, :] + cols[None, :, :]).reshape(height * width, -1)


def check_image_batch(images: Tensor) -> Tuple[int, int]:
    if images.dim() != 4 or images.shape[1] != 3:
        raise ConfigurationError(f"Expected images of shape (B, 3, H, W), got {tuple(images.shape)}")
    height, width = images.shape[-2:]
    if height % STRIDE or width % STRIDE:
        raise ConfigurationError(f"Image size {height}x{width} is not divisible by {STRIDE}")
    return height // STRIDE, width // STRIDE


class VisualEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.backbone = ResNetBackbone(cfg.c_v) if cfg.backbone is Backbone.RESNET50 else ConvBackbone(cfg.c_v)
        self.position = PositionEmbedding2D(cfg.max_grid, cfg.c_v)
        self.encoder = transformer_stack(cfg.c_v, cfg, cfg.visual_layers) if cfg.visual_layers else None

    def forward(self, images: Tensor) -> VisualFeatures:
        grid_h, grid_w = check_image_batch(images)
        feature_map = self.backbone(images)
        tokens = feature_map.flatten(2).transpose(1, 2)
        tokens = tokens + self.position(grid_h, grid_w)
        if self.encoder is not None:
            tokens = self.encoder(tokens)
        return VisualFeatures(tokens=tokens, height=grid_h, width=grid_w)


class TextEncoder(nn.Module):
    """Token embedding, 1-D position embedding and a transformer stack.

    One instance serves both the expression and the knowledge branch.
    """

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        if cfg.vocab_size <= 0:
            raise ConfigurationError("ModelConfig.vocab_size must be set before building the text encoder")
        self.max_tokens = cfg.max_text_tokens
        self.token = nn.Embedding(cfg.vocab_size, cfg.c_e, padding_idx=0)
        self.position = nn.Embedding(cfg.max_text_tokens, cfg.c_e)
        self.norm = nn.LayerNorm(cfg.c_e)
        self.dropout = nn.Dropout(cfg.dropout)
        self.encoder = transformer_stack(cfg.c_e, cfg, cfg.text_layers) if cfg.text_layers else None
        nn.init.normal_(self.position.weight, std=0.02)

    def forward(self, ids: Tensor, pad_mask: Tensor, role: TokenRole = TokenRole.EXPRESSION) -> TokenFeatures:
        if ids.shape[1] > self.max_tokens:
            raise ConfigurationError(f"{ids.shape[1]} text tokens exceed max_text_tokens={self.max_tokens}")
        if bool(pad_mask.all(dim=1).any()):
            raise ConfigurationError("Every text in the batch needs at least one token")
        positions = torch.arange(ids.shape[1], device=ids.device)
        tokens = self.dropout(self.norm(self.token(ids) + self.position(positions)))
        if self.encoder is not None:
            tokens = self.encoder(tokens, src_key_padding_mask=pad_mask)
        return TokenFeatures(tokens=tokens, pad_mask=pad_mask, role=role)


__all__ = [
    "ConvBackbone",
    "PositionEmbedding2D",
    "ResNetBackbone",
    "TextEncoder",
    "TokenFeatures",
    "TokenRole",
    "VisualEncoder",
    "VisualFeatures",
    "check_image_batch",
    "transformer_stack",
]
