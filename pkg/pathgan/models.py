# PathGAN model container and checkpoint archives
import json
import logging
import os
from dataclasses import asdict
from typing import Any, Dict, List, Optional, Union

import numpy as np
import torch
from torch import nn

from .backbone import FeatureExtractor, extract_features
from .config import ModelConfig
from .discriminator import DiscriminatorPair
from .exceptions import CheckpointError
from .generator import GeneratedPath, GeneratorConfig, GeneratorVariant, PathGenerator
from .utils import sha256_digest

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "pathgan-checkpoint-v1"
MANIFEST_KEY = "__manifest__"


class PathGAN(nn.Module):
    """FEN, PGN and the discriminator pair"""

    def __init__(self, model_config: Optional[ModelConfig] = None,
                 variant: Union[str, GeneratorVariant] = GeneratorVariant.SHARED,
                 use_noise: bool = True):
        super().__init__()
        self.model_config = model_config or ModelConfig()
        generator_config = GeneratorConfig.from_model_config(self.model_config, variant, use_noise)
        self.fen = FeatureExtractor(self.model_config)
        self.generator = PathGenerator(generator_config)
        self.discriminator = DiscriminatorPair(self.model_config, generator_config.position_scale)

    @property
    def variant(self) -> GeneratorVariant:
        return self.generator.variant

    def generator_parameters(self) -> List[nn.Parameter]:
        return list(self.generator.parameters())

    def discriminator_parameters(self) -> List[nn.Parameter]:
        return list(self.discriminator.parameters())

    @torch.no_grad()
    def generate(self, image, action: int, speed: float, k: int,
                 rng: Union[int, torch.Generator, None] = None,
                 ablate_intentions: bool = False) -> List[GeneratedPath]:
        """K paths for one (H, W, C) scene raster"""
        features = extract_features(image, self.fen)
        return self.generator.generate(features, action, speed, k, rng, ablate_intentions)

    def arrays(self) -> Dict[str, np.ndarray]:
        """Named parameter arrays (fen.*, generator.*, discriminator.*)"""
        return {name: tensor.detach().cpu().numpy() for name, tensor in self.state_dict().items()}

    def manifest(self, metadata: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        config = asdict(self.model_config)
        config["conv_channels"] = list(config["conv_channels"])
        return {
            "format": CHECKPOINT_FORMAT,
            "model_config": config,
            "variant": self.variant.value,
            "use_noise": self.generator.config.use_noise,
            "arrays": {name: list(array.shape) for name, array in self.arrays().items()},
            "metadata": metadata or {},
        }

    def load_arrays(self, arrays: Dict[str, np.ndarray], prefix: str = ""):
        """Copy named arrays into parameters; with a prefix only that sub-tree is loaded"""
        state = self.state_dict()
        names = [n for n in state if n.startswith(prefix)]
        missing = [n for n in names if n not in arrays]
        if missing:
            raise CheckpointError(f"Checkpoint lacks {len(missing)} arrays, e.g. {missing[0]}")
        for name in names:
            if tuple(arrays[name].shape) != tuple(state[name].shape):
                raise CheckpointError(
                    f"Shape mismatch for {name}: {tuple(arrays[name].shape)} vs {tuple(state[name].shape)}")
        self.load_state_dict({n: torch.from_numpy(np.array(arrays[n])).to(state[n].dtype) for n in names},
                             strict=not prefix)


def array_digest(arrays: Dict[str, np.ndarray]) -> str:
    """Digest of names, shapes and bytes, independent of archive timestamps"""
    def chunks():
        for name in sorted(arrays):
            array = np.ascontiguousarray(arrays[name])
            yield name.encode("utf-8")
            yield str(array.dtype.str).encode("ascii")
            yield str(tuple(array.shape)).encode("ascii")
            yield array.tobytes()
    return sha256_digest(chunks())


def save_checkpoint(model: PathGAN, path: str, metadata: Optional[Dict[str, Any]] = None) -> str:
    """Write an .npz archive of named arrays plus a JSON manifest; returns the digest"""
    arrays = model.arrays()
    manifest = json.dumps(model.manifest(metadata), sort_keys=True)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    try:
        with open(path, "wb") as f:
            np.savez(f, **{MANIFEST_KEY: np.array(manifest)}, **arrays)
    except OSError as e:
        logger.error(f"Error writing checkpoint {path}: {e}")
        raise
    digest = array_digest(arrays)
    logger.info(f"Saved checkpoint {path} (digest {digest[:12]})")
    return digest


def read_checkpoint(path: str):
    """(manifest, arrays) of a checkpoint archive"""
    if not os.path.isfile(path):
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            manifest = json.loads(str(data[MANIFEST_KEY]))
            arrays = {name: data[name] for name in data.files if name != MANIFEST_KEY}
    except (OSError, ValueError, KeyError) as e:
        logger.error(f"Error reading checkpoint {path}: {e}")
        raise CheckpointError(f"Malformed checkpoint {path}: {e}") from e
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"Unsupported checkpoint format: {manifest.get('format')}")
    return manifest, arrays


def load_checkpoint(path: str) -> PathGAN:
    manifest, arrays = read_checkpoint(path)
    config = dict(manifest["model_config"])
    config["conv_channels"] = tuple(config["conv_channels"])
    model = PathGAN(ModelConfig(**config), manifest["variant"], manifest["use_noise"])
    model.load_arrays(arrays)
    return model


def load_fen(model: PathGAN, path: str):
    """Warm-start the feature extractor from another checkpoint"""
    _, arrays = read_checkpoint(path)
    model.load_arrays(arrays, prefix="fen.")
    logger.info(f"Initialised FEN from {path}")


def checkpoint_digest(path: str) -> str:
    return array_digest(read_checkpoint(path)[1])
