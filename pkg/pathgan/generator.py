# Path generation network: autoregressive positions with local-intention estimation
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .backbone import SpatialAttention
from .config import ModelConfig
from .exceptions import ContractError, InvalidInputError
from .utils import torch_generator

logger = logging.getLogger(__name__)


class GeneratorVariant(str, Enum):
    """How local intentions are estimated"""
    NO_LI = "P2-noLI"
    DIRECT = "P3A-direct"
    SHARED = "P3B-shared"
    SPLIT = "P3C-split"


@dataclass(frozen=True)
class GeneratorConfig:
    variant: GeneratorVariant = GeneratorVariant.SHARED
    feature_dim: int = 32
    hidden_dim: int = 64
    embed_dim: int = 64
    noise_dim: int = 32
    attention_dim: int = 64
    path_length: int = 20
    num_actions: int = 9
    # Positions enter and leave the network in units of position_scale metres
    position_scale: float = 10.0
    use_noise: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variant", GeneratorVariant(self.variant))
        dims = (self.feature_dim, self.hidden_dim, self.embed_dim, self.noise_dim,
                self.attention_dim, self.path_length, self.num_actions)
        if min(dims) <= 0 or self.position_scale <= 0:
            raise InvalidInputError(f"Generator dimensions must be positive: {self}")

    @classmethod
    def from_model_config(cls, model_config: ModelConfig, variant: Union[str, GeneratorVariant],
                          use_noise: bool = True) -> "GeneratorConfig":
        return cls(
            variant=GeneratorVariant(variant),
            feature_dim=model_config.feature_dim,
            hidden_dim=model_config.hidden_dim,
            embed_dim=model_config.embed_dim,
            noise_dim=model_config.noise_dim,
            attention_dim=model_config.attention_dim,
            path_length=model_config.path_length,
            num_actions=model_config.num_actions,
            use_noise=use_noise,
        )

    @property
    def has_intention_recurrence(self) -> bool:
        return self.variant in (GeneratorVariant.SHARED, GeneratorVariant.SPLIT)


class GeneratorState(NamedTuple):
    """Recurrent state between rollout steps"""
    path_hidden: Tuple[torch.Tensor, torch.Tensor]
    intention_hidden: Optional[Tuple[torch.Tensor, torch.Tensor]]
    position: torch.Tensor
    intention: torch.Tensor
    context: torch.Tensor
    noise: torch.Tensor


class PositionStep(NamedTuple):
    position: torch.Tensor
    context: torch.Tensor
    weights: torch.Tensor
    state: GeneratorState


class Rollout(NamedTuple):
    """Batched rollout output: positions (..., L, 2), logits (..., L, 9), attention (..., L, M)"""
    positions: torch.Tensor
    logits: torch.Tensor
    attention: torch.Tensor


@dataclass
class GeneratedPath:
    positions: np.ndarray
    logits: np.ndarray
    attention: np.ndarray


class PathGenerator(nn.Module):
    """PGN with the four intention variants"""

    def __init__(self, generator_config: Optional[GeneratorConfig] = None):
        super().__init__()
        self.config = cfg = generator_config or GeneratorConfig()
        A, D, H, E = cfg.num_actions, cfg.feature_dim, cfg.hidden_dim, cfg.embed_dim

        self.action_embed = nn.Linear(A, E)
        self.init_hidden = nn.Linear(E + cfg.noise_dim, H)

        self.position_embed = nn.Linear(2 + A, E)
        self.lstm_p = nn.LSTMCell(E, H)
        self.att_p = SpatialAttention(H, D, cfg.attention_dim)
        self.output_hidden = nn.Linear(D + H, E)
        self.output = nn.Linear(E, 2)

        if cfg.has_intention_recurrence:
            self.intention_embed = nn.Linear(A + 2 + H + D, E)
            self.lstm_a = nn.LSTMCell(E, H)
            self.intention_out = nn.Linear(H, A)
        if cfg.variant == GeneratorVariant.SPLIT:
            self.att_a = SpatialAttention(H, D, cfg.attention_dim)
        if cfg.variant == GeneratorVariant.DIRECT:
            self.intention_mlp = nn.Sequential(nn.Linear(D, E), nn.ReLU(), nn.Linear(E, A))

    @property
    def variant(self) -> GeneratorVariant:
        return self.config.variant

    def _one_hot(self, actions: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
        actions = torch.as_tensor(actions, dtype=torch.long, device=like.device).reshape(-1)
        if actions.numel() and (actions.min() < 0 or actions.max() >= self.config.num_actions):
            raise InvalidInputError(f"Action ids must lie in [0, {self.config.num_actions - 1}]")
        return F.one_hot(actions, self.config.num_actions).to(like.dtype)

    def init_state(self, actions, speeds, noise: torch.Tensor, features: torch.Tensor) -> GeneratorState:
        """Initial recurrent state for a batch of (action, speed, z)"""
        action_vec = self._one_hot(actions, features)
        batch = action_vec.shape[0]
        speeds = torch.as_tensor(speeds, dtype=features.dtype, device=features.device).reshape(-1)
        if features.shape[0] != batch or speeds.shape[0] != batch or noise.shape[0] != batch:
            raise InvalidInputError("Actions, speeds, noise and features need the same batch size")
        if not self.config.use_noise:
            noise = torch.zeros_like(noise)

        hidden = F.relu(self.init_hidden(torch.cat([F.relu(self.action_embed(action_vec)), noise], dim=1)))
        cell = torch.zeros_like(hidden)
        position = speeds.unsqueeze(1).expand(batch, 2) / self.config.position_scale
        intention_hidden = None
        if self.config.has_intention_recurrence:
            intention_hidden = (torch.zeros_like(hidden), torch.zeros_like(hidden))
        attention = self.att_a if self.variant == GeneratorVariant.SPLIT else self.att_p
        context = attention(hidden, features).context
        return GeneratorState((hidden, cell), intention_hidden, position, action_vec, context, noise)

    def intention_step(self, state: GeneratorState) -> Tuple[torch.Tensor, GeneratorState]:
        """Next local-intention logits"""
        if self.variant == GeneratorVariant.NO_LI:
            raise ContractError("The P2-noLI generator has no intention estimator")
        if self.variant == GeneratorVariant.DIRECT:
            logits = self.intention_mlp(state.context)
            return logits, state._replace(intention=logits)
        embedded = F.relu(self.intention_embed(
            torch.cat([state.intention, state.position, state.path_hidden[0], state.context], dim=1)))
        intention_hidden = self.lstm_a(embedded, state.intention_hidden)
        logits = self.intention_out(intention_hidden[0])
        return logits, state._replace(intention_hidden=intention_hidden, intention=logits)

    def position_step(self, state: GeneratorState, intention: torch.Tensor,
                      features: torch.Tensor) -> PositionStep:
        """Next position (in scaled units) given the current intention vector"""
        embedded = F.relu(self.position_embed(torch.cat([state.position, intention], dim=1)))
        path_hidden = self.lstm_p(embedded, state.path_hidden)
        attended = self.att_p(path_hidden[0], features)
        hidden = F.relu(self.output_hidden(torch.cat([attended.context, path_hidden[0]], dim=1)))
        position = self.output(hidden)
        next_context = attended.context
        if self.variant == GeneratorVariant.SPLIT:
            next_context = self.att_a(path_hidden[0], features).context
        state = state._replace(path_hidden=path_hidden, position=position, context=next_context)
        return PositionStep(position, attended.context, attended.weights, state)

    def rollout(self, features: torch.Tensor, actions, speeds, noise: torch.Tensor,
                ablate_intentions: bool = False) -> Rollout:
        """Fully autoregressive rollout of L steps; generated positions and logits are fed back"""
        state = self.init_state(actions, speeds, noise, features)
        action_vec = state.intention
        fixed_intention = ablate_intentions or self.variant == GeneratorVariant.NO_LI
        positions, logits, weights = [], [], []
        for _ in range(self.config.path_length):
            if fixed_intention:
                intention = action_vec
            else:
                intention, state = self.intention_step(state)
            step = self.position_step(state, intention, features)
            state = step.state
            positions.append(step.position)
            logits.append(intention)
            weights.append(step.weights)
        return Rollout(torch.stack(positions, 1) * self.config.position_scale,
                       torch.stack(logits, 1), torch.stack(weights, 1))

    def sample_noise(self, batch: int, like: torch.Tensor,
                     generator: Optional[torch.Generator] = None) -> torch.Tensor:
        noise = torch.randn(batch, self.config.noise_dim, generator=generator, dtype=like.dtype)
        return noise.to(like.device)

    def forward(self, features: torch.Tensor, actions, speeds, k: int = 1,
                noise: Optional[torch.Tensor] = None, generator: Optional[torch.Generator] = None,
                ablate_intentions: bool = False) -> Rollout:
        """K rollouts per batch element; outputs carry a (B, K) leading shape"""
        if k < 1:
            raise InvalidInputError(f"K must be at least 1, got {k}")
        batch = features.shape[0]
        actions = torch.as_tensor(actions, dtype=torch.long, device=features.device).reshape(-1)
        speeds = torch.as_tensor(speeds, dtype=features.dtype, device=features.device).reshape(-1)
        if noise is None:
            noise = self.sample_noise(batch * k, features, generator)
        elif noise.shape != (batch * k, self.config.noise_dim):
            raise InvalidInputError(f"Noise must have shape ({batch * k}, {self.config.noise_dim})")
        out = self.rollout(features.repeat_interleave(k, 0), actions.repeat_interleave(k),
                           speeds.repeat_interleave(k), noise, ablate_intentions)
        return Rollout(*(t.reshape(batch, k, *t.shape[1:]) for t in out))

    @torch.no_grad()
    def generate(self, features: torch.Tensor, action: int, speed: float, k: int,
                 rng: Union[int, torch.Generator, None] = None,
                 ablate_intentions: bool = False) -> List[GeneratedPath]:
        """K paths for one scene, each from an independent noise draw"""
        if features.dim() == 2:
            features = features.unsqueeze(0)
        generator = torch_generator(rng) if isinstance(rng, int) else rng
        out = self.forward(features, [action], [speed], k=k, generator=generator,
                           ablate_intentions=ablate_intentions)
        return [GeneratedPath(out.positions[0, i].cpu().numpy().astype(np.float64),
                              out.logits[0, i].cpu().numpy().astype(np.float64),
                              out.attention[0, i].cpu().numpy().astype(np.float64))
                for i in range(k)]
