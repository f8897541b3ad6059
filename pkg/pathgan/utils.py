# Utility functions for the PathGAN planner
import hashlib
import logging
import os
import random
import shutil
import tempfile
from contextlib import contextmanager
from typing import Any, Dict, Iterable, Iterator, List

import numpy as np
import pandas as pd
import torch

from .config import config

# Configure logging
logging.basicConfig(
    level=getattr(logging, str(config.LOG_LEVEL).upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

logger = logging.getLogger(__name__)


def set_seed(seed: int):
    """Seed every random source used by the planner"""
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    if config.NUM_THREADS > 0:
        torch.set_num_threads(config.NUM_THREADS)


def torch_generator(seed: int) -> torch.Generator:
    """CPU generator for noise draws that do not disturb the global stream"""
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def sha256_digest(chunks: Iterable[bytes]) -> str:
    """Digest of a sequence of byte chunks"""
    digest = hashlib.sha256()
    for chunk in chunks:
        digest.update(chunk)
    return digest.hexdigest()


def file_chunks(path: str, size: int = 1 << 20) -> Iterator[bytes]:
    with open(path, "rb") as f:
        while True:
            chunk = f.read(size)
            if not chunk:
                return
            yield chunk


@contextmanager
def atomic_directory(target: str) -> Iterator[str]:
    """Build a directory under a temporary name and move it into place on success.

    On failure the partial directory is removed and any previous target is left untouched.
    """
    parent = os.path.dirname(os.path.abspath(target))
    os.makedirs(parent, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".staging-", dir=parent)
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if os.path.exists(target):
        shutil.rmtree(target)
    os.replace(staging, target)


class LossTracker:
    """Collect per-step loss records and summarise them per epoch"""

    def __init__(self):
        self.records: List[Dict[str, float]] = []

    def record(self, values: Dict[str, Any]):
        """Record one optimizer step"""
        self.records.append({key: float(value) for key, value in values.items()})

    def means(self) -> Dict[str, float]:
        """Mean of every recorded column"""
        if not self.records:
            return {}
        return pd.DataFrame(self.records).mean(numeric_only=True).to_dict()
