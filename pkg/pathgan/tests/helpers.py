# Shared fixtures for the test modules
import numpy as np
import torch

from pathgan.config import DatasetConfig, ModelConfig, SceneConfig


def tiny_model_config(path_length: int = 4, image_size: int = 16) -> ModelConfig:
    """Grid 2x2 (M = 4), hidden 8"""
    return ModelConfig(
        image_height=image_size,
        image_width=image_size,
        conv_channels=(2, 2, 2, 2),
        feature_dim=4,
        hidden_dim=8,
        embed_dim=8,
        noise_dim=4,
        attention_dim=4,
        d1_hidden_dim=8,
        d2_hidden_dim=8,
        path_length=path_length,
    )


def tiny_dataset_config(seed: int = 3, n_samples: int = 18) -> DatasetConfig:
    return DatasetConfig(
        scene=SceneConfig(image_height=16, image_width=16, path_length=20),
        seed=seed,
        n_samples=n_samples,
        balance_tolerance=0.9,
        f=5,
    )


def random_batch(model_config: ModelConfig, batch: int = 2, seed: int = 0,
                 dtype=torch.float32):
    """Batch dict shaped like a PathDataset batch"""
    rng = np.random.default_rng(seed)
    L = model_config.path_length
    image = rng.uniform(0.0, 1.0, (batch, 3, model_config.image_height, model_config.image_width))
    headings = rng.uniform(-0.3, 0.3, (batch, 1))
    steps = np.arange(1, L + 1)[None, :]
    path = np.stack([steps * np.sin(headings), steps * np.cos(headings)], axis=-1)
    return {
        "image": torch.tensor(image, dtype=dtype),
        "path": torch.tensor(path, dtype=dtype),
        "gi": torch.tensor(rng.integers(0, 9, batch), dtype=torch.long),
        "li": torch.tensor(rng.integers(0, 9, (batch, L)), dtype=torch.long),
        "speed": torch.tensor(rng.uniform(2.0, 15.0, batch), dtype=dtype),
        "index": torch.arange(batch),
    }
