# Single-path pretraining and adversarial training of FEN + PGN against the DN
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader
from tqdm import tqdm

from .config import ModelConfig
from .dataset import PathDataset, SyntheticDataset
from .evaluation import min_ade_fde
from .exceptions import ConfigError, ContractError, TrainingAbortedError
from .generator import GeneratorVariant
from .losses import (LossBundle, LossWeights, adversarial_losses, classification_losses,
                     total_objectives, variety_loss)
from .models import PathGAN, load_fen, save_checkpoint
from .reports import write_train_report
from .utils import LossTracker, set_seed, torch_generator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AblationSpec:
    """Generator variant and the loss terms an ablation trains with"""
    variant: GeneratorVariant
    adversarial: bool
    local_classification: bool
    intention_discriminator: bool


ABLATIONS: Dict[str, AblationSpec] = {
    "P1": AblationSpec(GeneratorVariant.NO_LI, False, False, False),
    "P2": AblationSpec(GeneratorVariant.NO_LI, True, False, False),
    "P3-A": AblationSpec(GeneratorVariant.DIRECT, True, True, False),
    "P3-B": AblationSpec(GeneratorVariant.SHARED, True, True, False),
    "P3-C": AblationSpec(GeneratorVariant.SPLIT, True, True, False),
    "P4": AblationSpec(GeneratorVariant.SHARED, True, True, True),
}


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 10
    max_steps: int = 0
    lr_main: float = 1e-4
    lr_fen: float = 5e-5
    betas: Tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    ablation: str = "P4"
    f: int = 5
    k_train: int = 20
    saturating_generator_loss: bool = False
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"Unknown ablation id: {self.ablation}")
        if not (self.lr_main > 0 and self.lr_fen > 0):
            raise ConfigError("Learning rates must be positive")
        if self.batch_size < 1 or self.k_train < 1 or self.epochs < 0 or self.max_steps < 0:
            raise ConfigError(f"Invalid training sizes: {self}")

    @property
    def spec(self) -> AblationSpec:
        return ABLATIONS[self.ablation]


@dataclass
class TrainReport:
    """Per-epoch loss means and validation metrics of one training run"""
    ablation: str
    seed: int
    epochs: List[Dict[str, float]] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.epochs)

    def save(self, output_dir: str, stage: str = "adversarial"):
        summary = {"stage": stage, "ablation": self.ablation, "seed": self.seed,
                   "epochs": len(self.epochs)}
        if self.epochs:
            summary.update({key: value for key, value in self.epochs[-1].items() if key != "epoch"})
        write_train_report(self.epochs, self.checkpoints, output_dir, summary)


class TrainResult(NamedTuple):
    model: PathGAN
    report: TrainReport
    checkpoint: Optional[str]


def _soft_intentions(logits: torch.Tensor) -> torch.Tensor:
    return F.softmax(logits, dim=-1)


def generator_objective(model: PathGAN, batch: Dict[str, torch.Tensor], train_config: TrainConfig,
                        noise: Optional[torch.Tensor] = None,
                        generator: Optional[torch.Generator] = None) -> Tuple[torch.Tensor, LossBundle]:
    """L_G on one batch with the ablation's terms; masked terms are exact zeros"""
    spec = train_config.spec
    features = model.fen(batch["image"])
    out = model.generator(features, batch["gi"], batch["speed"], k=train_config.k_train,
                          noise=noise, generator=generator)
    zero = features.new_zeros(())
    bundle = LossBundle(variety=variety_loss(batch["path"], out.positions),
                        adv1=zero, adv2=zero, cls1=zero, cls2=zero)

    if spec.adversarial:
        fake = model.discriminator.path(out.positions[:, 0], features)
        fake_sequences = None
        if spec.intention_discriminator:
            fake_sequences = model.discriminator.intentions(_soft_intentions(out.logits[:, 0]))
        bundle.adv1, bundle.adv2 = adversarial_losses(
            (None, None), (fake.score, fake_sequences), "generator",
            saturating=train_config.saturating_generator_loss)
        if spec.local_classification:
            bundle.cls1, bundle.cls2 = classification_losses(fake.logits, batch["gi"], out.logits, batch["li"])
        else:
            bundle.cls1, _ = classification_losses(fake.logits, batch["gi"])

    bundle.generator, _ = total_objectives(bundle, train_config.weights)
    return bundle.generator, bundle


def discriminator_objective(model: PathGAN, batch: Dict[str, torch.Tensor], train_config: TrainConfig,
                            noise: Optional[torch.Tensor] = None,
                            generator: Optional[torch.Generator] = None) -> Tuple[torch.Tensor, LossBundle]:
    """L_D on one batch; generated paths and features enter as constants"""
    spec = train_config.spec
    if not spec.adversarial:
        raise ContractError(f"Ablation {train_config.ablation} trains no discriminator")
    with torch.no_grad():
        features = model.fen(batch["image"])
        out = model.generator(features, batch["gi"], batch["speed"], k=1, noise=noise, generator=generator)
    real = model.discriminator.path(batch["path"].to(features.dtype), features)
    fake = model.discriminator.path(out.positions[:, 0], features)

    real_sequences = fake_sequences = None
    if spec.intention_discriminator:
        one_hot = F.one_hot(batch["li"].long(), model.model_config.num_actions).to(features.dtype)
        real_sequences = model.discriminator.intentions(one_hot)
        fake_sequences = model.discriminator.intentions(_soft_intentions(out.logits[:, 0]))

    d_adv1, d_adv2 = adversarial_losses((real.score, real_sequences), (fake.score, fake_sequences),
                                        "discriminator")
    cls1, _ = classification_losses(real.logits, batch["gi"])
    # Objective-signed adversarial values: L_adv = E log D(real) + E log(1 - D(fake))
    zero = features.new_zeros(())
    bundle = LossBundle(variety=zero, adv1=-d_adv1, adv2=-d_adv2, cls1=cls1, cls2=zero)
    _, bundle.discriminator = total_objectives(bundle, train_config.weights)
    return bundle.discriminator, bundle


class AdversarialTrainer:
    """One discriminator step then one generator step per batch"""

    def __init__(self, model: PathGAN, train_config: TrainConfig):
        self.model = model
        self.config = train_config
        self.spec = train_config.spec
        if model.variant != self.spec.variant:
            raise ConfigError(f"Ablation {train_config.ablation} needs the {self.spec.variant.value} "
                              f"generator, got {model.variant.value}")
        self.g_optimizer = torch.optim.Adam([
            {"params": model.generator_parameters(), "lr": train_config.lr_main},
            {"params": model.fen.parameters(), "lr": train_config.lr_fen},
        ], betas=train_config.betas)
        self.d_optimizer = None
        if self.spec.adversarial:
            self.d_optimizer = torch.optim.Adam(model.discriminator_parameters(),
                                                lr=train_config.lr_main, betas=train_config.betas)
        self.noise = torch_generator(train_config.seed + 1)
        self.step = 0

    def discriminator_step(self, batch: Dict[str, torch.Tensor]) -> LossBundle:
        self.d_optimizer.zero_grad()
        loss, bundle = discriminator_objective(self.model, batch, self.config, generator=self.noise)
        loss.backward()
        self.d_optimizer.step()
        return bundle

    def generator_step(self, batch: Dict[str, torch.Tensor]) -> LossBundle:
        self.g_optimizer.zero_grad()
        loss, bundle = generator_objective(self.model, batch, self.config, generator=self.noise)
        loss.backward()
        self.g_optimizer.step()
        return bundle

    def check_parameters(self):
        for name, parameter in self.model.named_parameters():
            if not bool(torch.isfinite(parameter).all()):
                logger.error(f"Non-finite parameter {name} after step {self.step}")
                raise TrainingAbortedError("Non-finite parameter", {"step": self.step, "parameter": name})

    def train_step(self, batch: Dict[str, torch.Tensor]) -> Dict[str, float]:
        self.model.train()
        record: Dict[str, float] = {}
        if self.d_optimizer is not None:
            d = self.discriminator_step(batch).as_dict()
            record.update({"d_adv1": d["adv1"], "d_adv2": d["adv2"], "d_cls1": d["cls1"],
                           "loss_d": d["discriminator"]})
        g = self.generator_step(batch).as_dict()
        record.update({"variety": g["variety"], "g_adv1": g["adv1"], "g_adv2": g["adv2"],
                       "g_cls1": g["cls1"], "cls2": g["cls2"], "loss_g": g["generator"]})
        self.step += 1
        self.check_parameters()
        return record


def validate(model: PathGAN, dataset: PathDataset, k: int, seed: int = 0) -> Dict[str, float]:
    """Validation minADE / minFDE with test-mode global intentions"""
    if len(dataset) == 0:
        return {"val_min_ade": math.nan, "val_min_fde": math.nan}
    model.eval()
    ades, fdes = [], []
    for i, record in enumerate(dataset.records):
        paths = [p.positions for p in model.generate(dataset.dataset.image(record),
                                                     dataset.global_intention(record), record.speed,
                                                     k, rng=seed + i)]
        ade, fde, _ = min_ade_fde(record.path, paths)
        ades.append(ade)
        fdes.append(fde)
    return {"val_min_ade": float(np.mean(ades)), "val_min_fde": float(np.mean(fdes))}


def _loaders(dataset: SyntheticDataset, train_config: TrainConfig, val_limit: int):
    train = PathDataset(dataset, "train", train_config.f, seed=train_config.seed)
    if len(train) == 0:
        raise ConfigError("The training split is empty")
    val = PathDataset(dataset, "val", train_config.f, limit=val_limit)
    loader = DataLoader(train, batch_size=train_config.batch_size, shuffle=True,
                        generator=torch_generator(train_config.seed))
    return loader, val


def pretrain_single(dataset: SyntheticDataset, train_config: TrainConfig,
                    model_config: Optional[ModelConfig] = None, output_dir: Optional[str] = None,
                    val_limit: int = 64) -> TrainResult:
    """Train FEN + P2-noLI generator with z = 0 on the mean squared position error"""
    set_seed(train_config.seed)
    model = PathGAN(model_config, GeneratorVariant.NO_LI, use_noise=False)
    optimizer = torch.optim.Adam(list(model.fen.parameters()) + model.generator_parameters(),
                                 lr=train_config.lr_main, betas=train_config.betas)
    loader, val = _loaders(dataset, train_config, val_limit)
    report = TrainReport(ablation="single", seed=train_config.seed)
    step = 0

    for epoch in range(1, train_config.epochs + 1):
        tracker = LossTracker()
        model.train()
        for batch in tqdm(loader, desc=f"pretrain {epoch}", disable=None, leave=False):
            optimizer.zero_grad()
            features = model.fen(batch["image"])
            out = model.generator(features, batch["gi"], batch["speed"], k=1)
            loss = variety_loss(batch["path"], out.positions)
            if not bool(torch.isfinite(loss)):
                logger.error(f"Pretraining diverged at step {step}")
                raise TrainingAbortedError("Non-finite pretraining loss", {"step": step, "epoch": epoch})
            loss.backward()
            optimizer.step()
            step += 1
            tracker.record({"mse": loss.item()})
            if train_config.max_steps and step >= train_config.max_steps:
                break
        row = {"epoch": epoch, "steps": step, **tracker.means(), **validate(model, val, 1, train_config.seed)}
        report.epochs.append(row)
        logger.info(f"Pretrain epoch {epoch}: mse={row.get('mse', math.nan):.4f} "
                    f"val_min_ade={row['val_min_ade']:.4f}")
        if train_config.max_steps and step >= train_config.max_steps:
            break

    checkpoint = None
    if output_dir:
        checkpoint = os.path.join(output_dir, "pretrain.npz")
        save_checkpoint(model, checkpoint, {"stage": "pretrain", "seed": train_config.seed, "steps": step})
        report.checkpoints.append(os.path.basename(checkpoint))
        report.save(output_dir, stage="pretrain")
    return TrainResult(model, report, checkpoint)


def train_adversarial(dataset: SyntheticDataset, train_config: TrainConfig,
                      model_config: Optional[ModelConfig] = None, fen_init: Optional[str] = None,
                      output_dir: Optional[str] = None, val_limit: int = 64) -> TrainResult:
    """Alternating D/G training for the configured ablation"""
    set_seed(train_config.seed)
    model = PathGAN(model_config, train_config.spec.variant)
    if fen_init:
        load_fen(model, fen_init)
    loader, val = _loaders(dataset, train_config, val_limit)
    trainer = AdversarialTrainer(model, train_config)
    report = TrainReport(ablation=train_config.ablation, seed=train_config.seed)

    for epoch in range(1, train_config.epochs + 1):
        tracker = LossTracker()
        for batch in tqdm(loader, desc=f"{train_config.ablation} epoch {epoch}", disable=None, leave=False):
            tracker.record(trainer.train_step(batch))
            if train_config.max_steps and trainer.step >= train_config.max_steps:
                break
        row = {"epoch": epoch, "steps": trainer.step, **tracker.means(),
               **validate(model, val, train_config.k_train, train_config.seed)}
        report.epochs.append(row)
        logger.info(f"{train_config.ablation} epoch {epoch}: loss_g={row.get('loss_g', math.nan):.4f} "
                    f"loss_d={row.get('loss_d', math.nan):.4f} val_min_ade={row['val_min_ade']:.4f} "
                    f"val_min_fde={row['val_min_fde']:.4f}")
        if train_config.max_steps and trainer.step >= train_config.max_steps:
            break

    checkpoint = None
    if output_dir:
        checkpoint = os.path.join(output_dir, "model.npz")
        save_checkpoint(model, checkpoint, {"stage": "adversarial", "ablation": train_config.ablation,
                                            "seed": train_config.seed, "steps": trainer.step})
        report.checkpoints.append(os.path.basename(checkpoint))
        report.save(output_dir)
    return TrainResult(model, report, checkpoint)
