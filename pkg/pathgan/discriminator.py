# Discriminator pair: path realism with intention classification, and LI-sequence realism
import logging
from typing import NamedTuple, Optional

import torch
import torch.nn.functional as F
from torch import nn

from .backbone import SpatialAttention
from .config import ModelConfig
from .exceptions import InvalidInputError

logger = logging.getLogger(__name__)


class DiscriminatorOutput(NamedTuple):
    score: torch.Tensor
    logits: torch.Tensor


class PathDiscriminator(nn.Module):
    """Scores path realism from positions alone and classifies the global intention with attention"""

    def __init__(self, model_config: Optional[ModelConfig] = None, position_scale: float = 10.0):
        super().__init__()
        self.config = cfg = model_config or ModelConfig()
        self.position_scale = position_scale
        H, E = cfg.d1_hidden_dim, cfg.embed_dim
        self.position_embed = nn.Linear(2, E)
        self.lstm = nn.LSTMCell(E, H)
        self.att_d = SpatialAttention(H, cfg.feature_dim, cfg.attention_dim)
        self.realism = nn.Linear(H, 1)
        self.fuse = nn.Linear(H + cfg.feature_dim, E)
        self.classify = nn.Linear(E, cfg.num_actions)

    def forward(self, paths: torch.Tensor, features: torch.Tensor) -> DiscriminatorOutput:
        """paths (B, L, 2) in metres, features (B, M, D) -> score (B,), logits (B, 9)"""
        if paths.dim() != 3 or paths.shape[1:] != (self.config.path_length, 2):
            raise InvalidInputError(
                f"Paths must have shape (B, {self.config.path_length}, 2), got {tuple(paths.shape)}")
        batch = paths.shape[0]
        hidden = paths.new_zeros(batch, self.config.d1_hidden_dim)
        state = (hidden, hidden)
        hidden_sum = torch.zeros_like(hidden)
        fused_sum = paths.new_zeros(batch, self.config.embed_dim)
        for l in range(paths.shape[1]):
            embedded = F.relu(self.position_embed(paths[:, l] / self.position_scale))
            state = self.lstm(embedded, state)
            context = self.att_d(state[0], features).context
            hidden_sum = hidden_sum + state[0]
            fused_sum = fused_sum + F.relu(self.fuse(torch.cat([state[0], context], dim=1)))
        score = torch.sigmoid(self.realism(hidden_sum)).squeeze(1)
        return DiscriminatorOutput(score, self.classify(fused_sum))


class IntentionDiscriminator(nn.Module):
    """Scores the realism of a sequence of one-hot or soft local-intention vectors"""

    def __init__(self, model_config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = cfg = model_config or ModelConfig()
        self.embed = nn.Linear(cfg.num_actions, cfg.embed_dim)
        self.lstm = nn.LSTMCell(cfg.embed_dim, cfg.d2_hidden_dim)
        self.realism = nn.Linear(cfg.d2_hidden_dim, 1)

    def forward(self, sequences: torch.Tensor) -> torch.Tensor:
        """sequences (B, L, 9) -> score (B,)"""
        expected = (self.config.path_length, self.config.num_actions)
        if sequences.dim() != 3 or tuple(sequences.shape[1:]) != expected:
            raise InvalidInputError(f"Sequences must have shape (B, {expected}), got {tuple(sequences.shape)}")
        hidden = sequences.new_zeros(sequences.shape[0], self.config.d2_hidden_dim)
        state = (hidden, hidden)
        for l in range(sequences.shape[1]):
            state = self.lstm(F.relu(self.embed(sequences[:, l])), state)
        return torch.sigmoid(self.realism(state[0])).squeeze(1)


class DiscriminatorPair(nn.Module):
    def __init__(self, model_config: Optional[ModelConfig] = None, position_scale: float = 10.0):
        super().__init__()
        self.path = PathDiscriminator(model_config, position_scale)
        self.intentions = IntentionDiscriminator(model_config)


def score_path(paths: torch.Tensor, features: torch.Tensor,
               discriminator: PathDiscriminator) -> DiscriminatorOutput:
    """Unbatched (L, 2) / (M, D) inputs are accepted as a batch of one"""
    if paths.dim() == 2:
        out = discriminator(paths.unsqueeze(0), features.unsqueeze(0))
        return DiscriminatorOutput(out.score[0], out.logits[0])
    return discriminator(paths, features)


def score_intentions(sequences: torch.Tensor, discriminator: IntentionDiscriminator) -> torch.Tensor:
    if sequences.dim() == 2:
        return discriminator(sequences.unsqueeze(0))[0]
    return discriminator(sequences)
