# Feature extraction network and spatial attention
import logging
from typing import NamedTuple, Optional

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .exceptions import InvalidInputError

logger = logging.getLogger(__name__)

CONV_STRIDES = (1, 2, 2, 2)


class AttentionResult(NamedTuple):
    context: torch.Tensor
    weights: torch.Tensor


class FeatureExtractor(nn.Module):
    """Small conv stack mapping a scene raster to M = (H/8)(W/8) context vectors of size D"""

    def __init__(self, model_config: Optional[ModelConfig] = None, in_channels: int = 3):
        super().__init__()
        self.config = model_config or ModelConfig()
        self.in_channels = in_channels
        layers = []
        channels = in_channels
        for out_channels, stride in zip(self.config.conv_channels, CONV_STRIDES):
            layers.append(nn.Conv2d(channels, out_channels, kernel_size=3, stride=stride, padding=1))
            layers.append(nn.ReLU())
            channels = out_channels
        self.conv = nn.Sequential(*layers)
        self.reduce = nn.Linear(channels, self.config.feature_dim)

    @property
    def num_cells(self) -> int:
        grid_h, grid_w = self.config.grid
        return grid_h * grid_w

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(B, C, H, W) images -> (B, M, D) visual context"""
        expected = (self.in_channels, self.config.image_height, self.config.image_width)
        if images.dim() != 4 or tuple(images.shape[1:]) != expected:
            raise InvalidInputError(f"Expected images of shape (B, {expected}), got {tuple(images.shape)}")
        maps = self.conv(images)
        cells = maps.flatten(2).transpose(1, 2)
        return self.reduce(cells)


def extract_features(image, fen: FeatureExtractor) -> torch.Tensor:
    """Visual context for one image given as (H, W, C) or (C, H, W)"""
    tensor = torch.as_tensor(image, dtype=next(fen.parameters()).dtype)
    if tensor.dim() == 3 and tensor.shape[-1] == fen.in_channels and tensor.shape[0] != fen.in_channels:
        tensor = tensor.permute(2, 0, 1)
    if tensor.dim() == 3:
        tensor = tensor.unsqueeze(0)
    return fen(tensor)[0]


class SpatialAttention(nn.Module):
    """Additive single-head attention: score_m = w . tanh(W_v v_m + W_h q)"""

    def __init__(self, query_dim: int, feature_dim: int, attention_dim: int):
        super().__init__()
        self.query_dim = query_dim
        self.feature_dim = feature_dim
        self.feature_proj = nn.Linear(feature_dim, attention_dim, bias=False)
        self.query_proj = nn.Linear(query_dim, attention_dim, bias=False)
        self.score = nn.Linear(attention_dim, 1, bias=False)

    def forward(self, query: torch.Tensor, features: torch.Tensor) -> AttentionResult:
        """query (B, Q), features (B, M, D) -> context (B, D), weights (B, M)"""
        if query.dim() != 2 or query.shape[1] != self.query_dim:
            raise InvalidInputError(f"Query must have shape (B, {self.query_dim}), got {tuple(query.shape)}")
        if features.dim() != 3 or features.shape[2] != self.feature_dim or features.shape[0] != query.shape[0]:
            raise InvalidInputError(
                f"Features must have shape ({query.shape[0]}, M, {self.feature_dim}), got {tuple(features.shape)}")
        hidden = torch.tanh(self.feature_proj(features) + self.query_proj(query).unsqueeze(1))
        weights = F.softmax(self.score(hidden).squeeze(-1), dim=1)
        context = torch.bmm(weights.unsqueeze(1), features).squeeze(1)
        return AttentionResult(context, weights)


def spatial_attention(query: torch.Tensor, features: torch.Tensor,
                      attention: SpatialAttention) -> AttentionResult:
    """Attend over unbatched (Q,) / (M, D) or batched inputs"""
    if query.dim() == 1 and features.dim() == 2:
        result = attention(query.unsqueeze(0), features.unsqueeze(0))
        return AttentionResult(result.context[0], result.weights[0])
    return attention(query, features)
