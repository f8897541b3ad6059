# Training objectives: variety, adversarial, classification and the composed L_G / L_D
import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Dict, Optional, Sequence, Tuple, Union

import torch
import torch.nn.functional as F

from .exceptions import InvalidInputError, TrainingAbortedError

logger = logging.getLogger(__name__)

SCORE_EPS = 1e-7
Scalar = Union[float, torch.Tensor]


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1e2
    lambda2: float = 1e-2
    lambda3: float = 5e-3
    lambda4: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise InvalidInputError(f"{name} must be non-negative, got {value}")


@dataclass
class LossBundle:
    """Scalar loss terms of one optimizer step, adversarial terms in their objective sign"""
    variety: Scalar = 0.0
    adv1: Scalar = 0.0
    adv2: Scalar = 0.0
    cls1: Scalar = 0.0
    cls2: Scalar = 0.0
    generator: Scalar = 0.0
    discriminator: Scalar = 0.0

    def as_dict(self, prefix: str = "") -> Dict[str, float]:
        return {f"{prefix}{f.name}": _value(getattr(self, f.name)) for f in fields(self)}


def variety_loss(gt: torch.Tensor, generated: torch.Tensor) -> torch.Tensor:
    """Best-of-K mean squared position error.

    gt is (L, 2) or (B, L, 2); generated is (K, L, 2) or (B, K, L, 2). Batched inputs are
    averaged over the batch.
    """
    if gt.dim() == 2:
        gt, generated = gt.unsqueeze(0), generated.unsqueeze(0)
    if generated.dim() != 4 or generated.shape[1] == 0:
        raise InvalidInputError("variety_loss needs at least one generated path")
    if generated.shape[2:] != gt.shape[1:] or generated.shape[0] != gt.shape[0]:
        raise InvalidInputError(
            f"Generated paths {tuple(generated.shape)} do not match ground truth {tuple(gt.shape)}")
    per_path = ((generated - gt.unsqueeze(1)) ** 2).sum(-1).mean(-1)
    return per_path.min(dim=1).values.mean()


def _check_scores(scores: torch.Tensor, name: str) -> torch.Tensor:
    if not bool(torch.all((scores >= 0.0) & (scores <= 1.0))):
        raise InvalidInputError(f"{name} scores must lie in [0, 1]")
    return scores.clamp(SCORE_EPS, 1.0 - SCORE_EPS)


def adversarial_loss(real: Optional[torch.Tensor], fake: torch.Tensor, role: str,
                     saturating: bool = False) -> torch.Tensor:
    """Positive loss minimised by the given role for one score stream"""
    fake = _check_scores(fake, "Fake")
    if role == "discriminator":
        if real is None:
            raise InvalidInputError("The discriminator loss needs real scores")
        real = _check_scores(real, "Real")
        return -(torch.log(real).mean() + torch.log(1.0 - fake).mean())
    if role == "generator":
        if saturating:
            return torch.log(1.0 - fake).mean()
        return -torch.log(fake).mean()
    raise InvalidInputError(f"Role must be 'generator' or 'discriminator', got {role!r}")


def adversarial_losses(real_scores: Sequence[Optional[torch.Tensor]],
                       fake_scores: Sequence[Optional[torch.Tensor]], role: str,
                       saturating: bool = False) -> Tuple[torch.Tensor, torch.Tensor]:
    """(path stream, LI-sequence stream) losses; a stream with no fake scores contributes 0"""
    losses = []
    for real, fake in zip(real_scores, fake_scores):
        if fake is None:
            losses.append(torch.zeros(()))
        else:
            losses.append(adversarial_loss(real, fake, role, saturating))
    return losses[0], losses[1]


def _check_actions(actions: torch.Tensor, num_actions: int):
    if actions.numel() and (actions.min() < 0 or actions.max() >= num_actions):
        raise InvalidInputError(f"Action ids must lie in [0, {num_actions - 1}]")


def classification_losses(class_logits: torch.Tensor, actions: torch.Tensor,
                          intention_logits: Optional[torch.Tensor] = None,
                          local_targets: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
    """Softmax cross-entropy of the global class logits and of the local intentions at steps 2..L.

    intention_logits is (B, L, 9) or (B, K, L, 9) against local_targets (B, L).
    """
    num_actions = class_logits.shape[-1]
    actions = torch.as_tensor(actions, dtype=torch.long, device=class_logits.device).reshape(-1)
    _check_actions(actions, num_actions)
    cls1 = F.cross_entropy(class_logits.reshape(-1, num_actions), actions)
    if intention_logits is None:
        return cls1, torch.zeros((), dtype=cls1.dtype)

    targets = torch.as_tensor(local_targets, dtype=torch.long, device=intention_logits.device)
    _check_actions(targets, num_actions)
    if intention_logits.dim() == 4:
        targets = targets.unsqueeze(1).expand(*intention_logits.shape[:3])
    if intention_logits.shape[:-1] != targets.shape or targets.shape[-1] < 2:
        raise InvalidInputError("Local intention logits and targets must cover the same L >= 2 steps")
    cls2 = F.cross_entropy(intention_logits[..., 1:, :].reshape(-1, num_actions),
                           targets[..., 1:].reshape(-1))
    return cls1, cls2


def _value(term: Scalar) -> float:
    return float(term.detach()) if isinstance(term, torch.Tensor) else float(term)


def total_objectives(terms: LossBundle, weights: Optional[LossWeights] = None) -> Tuple[Scalar, Scalar]:
    """L_G = l1 var + adv1 + cls1 + l2 adv2 + l3 cls2 and L_D = -adv1 - l4 adv2 + cls1"""
    weights = weights or LossWeights()
    values = {name: _value(getattr(terms, name)) for name in ("variety", "adv1", "adv2", "cls1", "cls2")}
    bad = {name: value for name, value in values.items() if not math.isfinite(value)}
    if bad:
        logger.error(f"Non-finite loss terms: {bad}")
        raise TrainingAbortedError("Non-finite loss term", diagnostics=values)

    generator = (weights.lambda1 * terms.variety + terms.adv1 + terms.cls1
                 + weights.lambda2 * terms.adv2 + weights.lambda3 * terms.cls2)
    discriminator = -terms.adv1 - weights.lambda4 * terms.adv2 + terms.cls1
    return generator, discriminator
