# Synthetic dataset build, persistence and torch views
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from torch.utils.data import Dataset
from tqdm import tqdm

from .config import DatasetConfig, SceneConfig
from .exceptions import ConfigError, GenerationError, InvalidInputError, PathGANError
from .geometry import Path
from .scenes import (NUM_ACTIONS, Action, SceneSpec, assemble_sample, generate_scene,
                     select_global_intention)
from .utils import atomic_directory, file_chunks, sha256_digest

logger = logging.getLogger(__name__)

INDEX_FILE = "index.txt"
IMAGE_DIR = "images"
SEPARATOR = "---"
FORMAT = "pathgan-dataset-v1"
SPLITS = ("train", "val", "test")
COLUMNS = ["split", "seed", "maneuver", "speed", "gi", "li", "path", "image"]
SPACING_TOLERANCE = 1e-6


@dataclass
class DatasetRecord:
    """One persisted sample"""
    split: str
    seed: int
    maneuver: int
    speed: float
    gi: int
    li: np.ndarray
    path: np.ndarray
    image: str

    def to_row(self) -> Dict[str, str]:
        return {
            "split": self.split,
            "seed": str(self.seed),
            "maneuver": str(self.maneuver),
            "speed": repr(float(self.speed)),
            "gi": str(self.gi),
            "li": " ".join(str(int(v)) for v in self.li),
            "path": " ".join("%.17g" % v for v in self.path.reshape(-1)),
            "image": self.image,
        }

    @classmethod
    def from_row(cls, row) -> "DatasetRecord":
        path = np.array([float(v) for v in str(row["path"]).split()], dtype=np.float64)
        return cls(
            split=str(row["split"]),
            seed=int(row["seed"]),
            maneuver=int(row["maneuver"]),
            speed=float(row["speed"]),
            gi=int(row["gi"]),
            li=np.array([int(v) for v in str(row["li"]).split()], dtype=np.int64),
            path=path.reshape(-1, 2),
            image=str(row["image"]),
        )


def split_quotas(dataset_config: DatasetConfig) -> Dict[str, np.ndarray]:
    """Per-split, per-action sample targets"""
    n = dataset_config.n_samples
    n_test = int(round(n * dataset_config.test_fraction))
    n_val = int(round((n - n_test) * dataset_config.val_fraction))
    sizes = {"train": n - n_test - n_val, "val": n_val, "test": n_test}
    quotas = {}
    for split, size in sizes.items():
        quota = np.full(NUM_ACTIONS, size // NUM_ACTIONS, dtype=np.int64)
        quota[: size % NUM_ACTIONS] += 1
        quotas[split] = quota
    return quotas


def scene_seed(master_seed: int, attempt: int) -> int:
    return master_seed * 10_000_000 + attempt


def _propose(job: Tuple[int, int, SceneConfig, int]):
    """Synthesise the sample for one proposal; None when the scene is rejected"""
    seed, maneuver, scene_config, f = job
    try:
        spec = SceneSpec.random(seed, Action(maneuver), scene_config)
        scene = generate_scene(spec, scene_config)
        sample = assemble_sample(scene, scene_config.path_length, f, mode="test")
    except (GenerationError, InvalidInputError) as e:
        logger.debug(f"Rejected scene {seed}: {e}")
        return None
    image = np.round(sample.image * 255.0).astype(np.uint8)
    return seed, maneuver, sample.speed, sample.global_intention, sample.local_intentions, \
        sample.path.positions, image


def _proposals(dataset_config: DatasetConfig, max_attempts: int,
               chunk: int = 64) -> Iterator[tuple]:
    """Proposal results in attempt order, optionally computed by worker processes"""
    def job(i: int):
        return scene_seed(dataset_config.seed, i), i % NUM_ACTIONS, dataset_config.scene, dataset_config.f

    if dataset_config.workers <= 1:
        for i in range(max_attempts):
            yield _propose(job(i))
        return
    batch = dataset_config.workers * chunk
    with ProcessPoolExecutor(max_workers=dataset_config.workers) as pool:
        # Submit one batch at a time so an early stop leaves little work pending
        for start in range(0, max_attempts, batch):
            jobs = [job(i) for i in range(start, min(start + batch, max_attempts))]
            yield from pool.map(_propose, jobs, chunksize=chunk)


def build_dataset(dataset_config: DatasetConfig, output_dir: str) -> str:
    """Synthesise a class-balanced dataset into `output_dir` and return its digest.

    Proposals cycle through the nine maneuvers; a sample is kept only while the quota
    of its global intention in some split is still open (train, then val, then test).
    """
    quotas = split_quotas(dataset_config)
    counts = {split: np.zeros(NUM_ACTIONS, dtype=np.int64) for split in SPLITS}
    max_attempts = dataset_config.n_samples * dataset_config.max_attempts_factor
    remaining = int(sum(q.sum() for q in quotas.values()))

    records: List[DatasetRecord] = []
    images: List[np.ndarray] = []
    progress = tqdm(total=remaining, desc="synth", disable=None)
    for result in _proposals(dataset_config, max_attempts):
        if result is None:
            continue
        seed, maneuver, speed, gi, li, path, image = result
        split = next((s for s in SPLITS if counts[s][gi] < quotas[s][gi]), None)
        if split is None:
            continue
        counts[split][gi] += 1
        records.append(DatasetRecord(split, seed, maneuver, speed, gi, li, path, f"{seed}.u8"))
        images.append(image)
        progress.update(1)
        remaining -= 1
        if remaining == 0:
            break
    progress.close()

    for split in SPLITS:
        floor = np.floor(quotas[split] * (1.0 - dataset_config.balance_tolerance))
        short = np.flatnonzero(counts[split] < floor)
        if short.size:
            detail = ", ".join(f"{Action(a).label}={counts[split][a]}/{quotas[split][a]}" for a in short)
            logger.error(f"Unsatisfiable balance in {split} split after {max_attempts} attempts: {detail}")
            raise ConfigError(f"Cannot balance the {split} split: {detail}")

    header = {
        "format": FORMAT,
        "seed": dataset_config.seed,
        "n_samples": len(records),
        "path_length": dataset_config.scene.path_length,
        "f": dataset_config.f,
        "image_height": dataset_config.scene.image_height,
        "image_width": dataset_config.scene.image_width,
        "channels": 3,
        "test_fraction": dataset_config.test_fraction,
        "val_fraction": dataset_config.val_fraction,
        "balance_tolerance": dataset_config.balance_tolerance,
    }
    with atomic_directory(output_dir) as staging:
        write_index(os.path.join(staging, INDEX_FILE), header, records)
        os.makedirs(os.path.join(staging, IMAGE_DIR))
        for record, image in zip(records, images):
            image.tofile(os.path.join(staging, IMAGE_DIR, record.image))

    digest = dataset_digest(output_dir)
    logger.info(f"Built dataset with {len(records)} samples in {output_dir} (digest {digest[:12]})")
    return digest


def write_index(path: str, header: Dict[str, object], records: Sequence[DatasetRecord]):
    frame = pd.DataFrame([r.to_row() for r in records], columns=COLUMNS)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key, value in header.items():
            f.write(f"{key}={value}\n")
        f.write(SEPARATOR + "\n")
        frame.to_csv(f, index=False, lineterminator="\n")


def read_index(path: str) -> Tuple[Dict[str, str], List[DatasetRecord]]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        logger.error(f"Error reading dataset index: {e}")
        raise
    head, sep, body = text.partition(SEPARATOR + "\n")
    if not sep:
        raise InvalidInputError(f"Dataset index {path} has no '{SEPARATOR}' separator")
    header = dict(line.split("=", 1) for line in head.splitlines() if line.strip())
    if header.get("format") != FORMAT:
        raise InvalidInputError(f"Unsupported dataset format: {header.get('format')}")
    frame = pd.read_csv(io.StringIO(body), dtype=str, keep_default_na=False)
    return header, [DatasetRecord.from_row(row) for _, row in frame.iterrows()]


def dataset_digest(root: str) -> str:
    """SHA-256 over the index bytes followed by every image blob in index order"""
    index_path = os.path.join(root, INDEX_FILE)
    _, records = read_index(index_path)

    def chunks():
        yield from file_chunks(index_path)
        for record in records:
            yield from file_chunks(os.path.join(root, IMAGE_DIR, record.image))

    return sha256_digest(chunks())


class SyntheticDataset:
    """Dataset directory loaded into memory"""

    def __init__(self, root: str):
        self.root = root
        self.header, self.records = read_index(os.path.join(root, INDEX_FILE))
        self.path_length = int(self.header["path_length"])
        self.image_shape = (int(self.header["image_height"]), int(self.header["image_width"]),
                            int(self.header["channels"]))
        self._images: Dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.records)

    def split(self, name: str) -> List[DatasetRecord]:
        if name not in SPLITS:
            raise InvalidInputError(f"Unknown split: {name}")
        return [r for r in self.records if r.split == name]

    def image(self, record: DatasetRecord) -> np.ndarray:
        """Scene raster as float32 (H, W, C) in [0, 1]"""
        if record.image not in self._images:
            raw = np.fromfile(os.path.join(self.root, IMAGE_DIR, record.image), dtype=np.uint8)
            if raw.size != int(np.prod(self.image_shape)):
                raise InvalidInputError(f"Image blob {record.image} has {raw.size} bytes")
            self._images[record.image] = raw.reshape(self.image_shape)
        return self._images[record.image].astype(np.float32) / 255.0

    def action_counts(self) -> pd.DataFrame:
        """Samples per split (rows) and global intention (columns)"""
        frame = pd.DataFrame({"split": [r.split for r in self.records],
                              "gi": [r.gi for r in self.records]})
        counts = frame.groupby(["split", "gi"]).size().unstack(fill_value=0)
        return counts.rename(columns=lambda action: Action(action).label)

    def digest(self) -> str:
        return dataset_digest(self.root)


def verify_dataset(dataset: SyntheticDataset) -> int:
    """Re-check every stored sample; returns the number checked"""
    for record in dataset.records:
        path = Path(record.path)
        if len(path) != dataset.path_length or record.li.shape != (dataset.path_length,):
            raise InvalidInputError(f"Sample {record.seed} has the wrong length")
        error = path.spacing_error()
        if error >= SPACING_TOLERANCE:
            raise InvalidInputError(f"Sample {record.seed} violates unit spacing by {error:.3g}")
        if not 0 <= record.gi < NUM_ACTIONS or record.li.min() < 0 or record.li.max() >= NUM_ACTIONS:
            raise InvalidInputError(f"Sample {record.seed} has an invalid action id")
    return len(dataset.records)


class PathDataset(Dataset):
    """Torch view over one split.

    In train mode the global intention is re-drawn from the first F local intentions on
    every access; in test mode it is the majority of those F labels.
    """

    def __init__(self, dataset: SyntheticDataset, split: str, f: int,
                 mode: Optional[str] = None, seed: int = 0, limit: int = 0):
        if not 1 <= f <= dataset.path_length:
            raise InvalidInputError(f"F must lie in [1, {dataset.path_length}], got {f}")
        self.dataset = dataset
        self.records = dataset.split(split)
        if limit:
            self.records = self.records[:limit]
        self.f = f
        self.mode = mode or ("train" if split == "train" else "test")
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self.records)

    def global_intention(self, record: DatasetRecord) -> int:
        return select_global_intention(record.li[: self.f], self.mode, self.rng)

    def __getitem__(self, index: int) -> Dict[str, torch.Tensor]:
        record = self.records[index]
        image = self.dataset.image(record)
        return {
            "image": torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))),
            "path": torch.from_numpy(record.path.astype(np.float32)),
            "gi": torch.tensor(self.global_intention(record), dtype=torch.long),
            "li": torch.from_numpy(record.li.astype(np.int64)),
            "speed": torch.tensor(record.speed, dtype=torch.float32),
            "index": torch.tensor(index, dtype=torch.long),
        }


def load_dataset(root: str) -> SyntheticDataset:
    if not os.path.isfile(os.path.join(root, INDEX_FILE)):
        raise PathGANError(f"No dataset found at {root}; run the synth command first")
    return SyntheticDataset(root)
