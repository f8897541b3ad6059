# Path metrics, model evaluation and generation-speed measurement
import logging
import math
import time
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
from scipy.special import logsumexp

from .config import EvalConfig, SteeringConfig
from .exceptions import InvalidInputError
from .geometry import Path, path_to_steering
from .reports import MetricReport
from .scenes import ACTION_NAMES, select_global_intention

logger = logging.getLogger(__name__)

BANDWIDTH_FLOOR = 1e-3
PathLike = Union[Path, np.ndarray, Sequence[Sequence[float]]]


def _positions(path: PathLike) -> np.ndarray:
    if isinstance(path, Path):
        return path.positions
    positions = np.asarray(getattr(path, "positions", path), dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 2:
        raise InvalidInputError(f"Path must have shape (L, 2), got {positions.shape}")
    return positions


def _stack(paths: Sequence[PathLike]) -> np.ndarray:
    arrays = [_positions(p) for p in paths]
    if len({a.shape for a in arrays}) > 1:
        raise InvalidInputError("All paths must have the same length")
    return np.stack(arrays) if arrays else np.empty((0, 0, 2))


def ade_fde(gt: PathLike, candidate: PathLike) -> Tuple[float, float]:
    """Mean and final Euclidean displacement (metres, not squared)"""
    gt, candidate = _positions(gt), _positions(candidate)
    if gt.shape != candidate.shape:
        raise InvalidInputError(f"Path lengths differ: {gt.shape[0]} vs {candidate.shape[0]}")
    distances = np.linalg.norm(gt - candidate, axis=1)
    return float(distances.mean()), float(distances[-1])


def min_ade_fde(gt: PathLike, candidates: Sequence[PathLike]) -> Tuple[float, float, int]:
    """(minADE, minFDE, index of the minimum-ADE candidate)"""
    if not len(candidates):
        raise InvalidInputError("min_ade_fde needs at least one candidate")
    gt = _positions(gt)
    distances = np.linalg.norm(_stack(candidates) - gt, axis=2)
    ades = distances.mean(axis=1)
    best = int(np.argmin(ades))
    return float(ades[best]), float(distances[:, -1].min()), best


def min_ade_curve(gt: PathLike, candidates: Sequence[PathLike]) -> np.ndarray:
    """minADE over the first K candidates for K = 1..len(candidates)"""
    ades = np.linalg.norm(_stack(candidates) - _positions(gt), axis=2).mean(axis=1)
    return np.minimum.accumulate(ades)


def diversity(paths: Sequence[PathLike]) -> float:
    """Mean ADE over all unordered pairs of generated paths"""
    if len(paths) < 2:
        raise InvalidInputError("Diversity needs at least two paths")
    stacked = _stack(paths)
    pairs = [np.linalg.norm(stacked[i] - stacked[j], axis=1).mean()
             for i, j in combinations(range(len(stacked)), 2)]
    return float(np.mean(pairs))


def marginal_log_likelihood(gt: PathLike, paths: Sequence[PathLike]) -> float:
    """Mean per-position log-density of the ground truth under a KDE of the generated positions.

    Each position uses an axis-aligned Gaussian kernel with Scott's-rule bandwidth (floored
    at 1e-3 m). Kernel centres are shrunk toward the sample mean so the mixture keeps the
    sample variance.
    """
    if len(paths) < 2:
        raise InvalidInputError("MLL needs at least two generated paths")
    gt = _positions(gt)
    samples = _stack(paths)
    if samples.shape[1:] != gt.shape:
        raise InvalidInputError("Generated paths and ground truth differ in length")
    n, dims = samples.shape[0], 2
    factor = n ** (-1.0 / (dims + 4))
    shrink = math.sqrt(1.0 - factor ** 2)

    total = 0.0
    for l in range(gt.shape[0]):
        points = samples[:, l]
        mean = points.mean(axis=0)
        std = points.std(axis=0, ddof=1)
        bandwidth = np.maximum(factor * std, BANDWIDTH_FLOOR)
        centres = mean + shrink * (points - mean)
        z = (gt[l] - centres) / bandwidth
        log_kernel = -0.5 * (z ** 2).sum(axis=1) - np.log(bandwidth).sum() - dims * 0.5 * math.log(2 * math.pi)
        total += float(logsumexp(log_kernel) - math.log(n))
    return total / gt.shape[0]


def steering_mse(gt_path: PathLike, best_path: PathLike, speed: float,
                 steering_config: Optional[SteeringConfig] = None) -> float:
    """Squared difference of the oracle steering read off both paths"""
    gt = path_to_steering(Path(_positions(gt_path)), speed, steering_config)
    best = path_to_steering(Path(_positions(best_path)), speed, steering_config)
    return (gt - best) ** 2


def path_curvature(path: PathLike) -> float:
    """Mean absolute heading change per metre along a path starting at the origin"""
    points = np.vstack([np.zeros((1, 2)), _positions(path)])
    steps = np.diff(points, axis=0)
    headings = np.unwrap(np.arctan2(steps[:, 0], steps[:, 1]))
    lengths = np.linalg.norm(steps, axis=1)
    if len(headings) < 2 or lengths.sum() == 0:
        return 0.0
    return float(np.abs(np.diff(headings)).sum() / lengths[1:].sum())


@dataclass
class SpeedReport:
    mean: float
    std: float
    records: int


def measure_generation_speed(model, samples: Sequence[Tuple[np.ndarray, int, float]], k: int,
                             records: int = 300, warmup: int = 3, seed: int = 0) -> SpeedReport:
    """Wall-clock seconds per generated path, averaged over `records` timed generations"""
    if not samples:
        raise InvalidInputError("Speed measurement needs at least one scene")
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    model.eval()
    try:
        for i in range(warmup):
            image, action, speed = samples[i % len(samples)]
            model.generate(image, action, speed, k, rng=seed + i)
        timings = []
        for i in range(records):
            image, action, speed = samples[i % len(samples)]
            start = time.perf_counter()
            model.generate(image, action, speed, k, rng=seed + i)
            timings.append((time.perf_counter() - start) / k)
    finally:
        torch.set_num_threads(threads)
    timings = np.array(timings)
    logger.info(f"Generation speed: {timings.mean():.6f} +- {timings.std():.6f} s/path over {records} records")
    return SpeedReport(float(timings.mean()), float(timings.std()), records)


def speed_sweep(model, image: np.ndarray, action: int, speeds: Sequence[float], k: int,
                seed: int = 0) -> Dict[float, Tuple[List[np.ndarray], float]]:
    """Paths generated for one scene at several speeds with their mean absolute curvature"""
    results = {}
    for speed in speeds:
        paths = [p.positions for p in model.generate(image, action, float(speed), k, rng=seed)]
        results[float(speed)] = (paths, float(np.mean([path_curvature(p) for p in paths])))
    return results


def evaluate_model(model, dataset, records, eval_config: Optional[EvalConfig] = None,
                   steering_config: Optional[SteeringConfig] = None, seed: int = 0,
                   label: str = "") -> MetricReport:
    """Metric suite over test records; global intentions are the test-mode majority of the first F labels"""
    eval_config = eval_config or EvalConfig()
    if eval_config.k < 2:
        raise InvalidInputError("Evaluation needs K >= 2 for Div and MLL")
    if eval_config.max_samples:
        records = records[: eval_config.max_samples]
    model.eval()
    rows = []
    for i, record in enumerate(records):
        gi = select_global_intention(record.li[: eval_config.f], "test")
        paths = [p.positions for p in model.generate(dataset.image(record), gi, record.speed,
                                                     eval_config.k, rng=seed + i)]
        ade, fde, best = min_ade_fde(record.path, paths)
        rows.append({
            "action": ACTION_NAMES[gi],
            "min_ade": ade,
            "min_fde": fde,
            "div": diversity(paths),
            "mll": marginal_log_likelihood(record.path, paths),
            "min_mse_s": steering_mse(record.path, paths[best], record.speed, steering_config),
        })
    if not rows:
        raise InvalidInputError("No records to evaluate")
    frame = pd.DataFrame(rows)
    report = MetricReport.from_frame(frame, k=eval_config.k, f=eval_config.f, label=label)
    logger.info(f"Evaluated {len(rows)} samples: minADE={report.min_ade:.4f} minFDE={report.min_fde:.4f}")
    return report
