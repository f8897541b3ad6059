# Static figures: path overlays, attention heat-maps and the speed sweep
import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import SceneConfig  # noqa: E402
from .scenes import SceneRenderer  # noqa: E402

logger = logging.getLogger(__name__)

alpha_marker = 0.7
gt_color = "lime"
path_color = "orangered"


def _display(image: np.ndarray) -> np.ndarray:
    """Channels (drivable, markings, obstacles) shown as (grey road, white lines, red blobs)"""
    base = np.repeat(image[..., :1], 3, axis=2)
    base = np.maximum(base, image[..., 1:2])
    base[..., 0] = np.maximum(base[..., 0], image[..., 2])
    return np.clip(base, 0.0, 1.0)


def _save(figure, out_file: str):
    os.makedirs(os.path.dirname(os.path.abspath(out_file)), exist_ok=True)
    figure.savefig(out_file, dpi=120, bbox_inches="tight")
    plt.close(figure)
    logger.info(f"Wrote {out_file}")


def plot_scene_paths(image: np.ndarray, gt: np.ndarray, paths: Sequence[np.ndarray], out_file: str,
                     scene_config: Optional[SceneConfig] = None, title: str = ""):
    """Ground truth and K generated paths projected onto the front-view raster, plus a top view"""
    renderer = SceneRenderer(scene_config or SceneConfig(image_height=image.shape[0],
                                                          image_width=image.shape[1]))
    figure, (front, top) = plt.subplots(1, 2, figsize=(9, 4.5))
    front.imshow(_display(image), origin="upper")
    for positions in paths:
        uv = renderer.project(positions)
        front.plot(uv[:, 0] - 0.5, uv[:, 1] - 0.5, color=path_color, alpha=alpha_marker, linewidth=1)
        top.plot(positions[:, 0], positions[:, 1], color=path_color, alpha=alpha_marker, linewidth=1)
    uv = renderer.project(gt)
    front.plot(uv[:, 0] - 0.5, uv[:, 1] - 0.5, color=gt_color, linewidth=2)
    top.plot(gt[:, 0], gt[:, 1], color=gt_color, linewidth=2, label="ground truth")
    front.set_xlim(-0.5, image.shape[1] - 0.5)
    front.set_ylim(image.shape[0] - 0.5, -0.5)
    front.set_axis_off()
    top.set_aspect("equal")
    top.set_xlabel("x (m, right)")
    top.set_ylabel("y (m, forward)")
    top.legend(loc="lower right")
    if title:
        figure.suptitle(title)
    _save(figure, out_file)


def attention_map(weights: np.ndarray, grid: Tuple[int, int], shape: Tuple[int, int]) -> np.ndarray:
    """Upsample M attention weights on the feature grid to image resolution"""
    cells = np.asarray(weights, dtype=np.float64).reshape(grid)
    scale = (shape[0] // grid[0], shape[1] // grid[1])
    return np.kron(cells, np.ones(scale))


def plot_attention(image: np.ndarray, attention: np.ndarray, steps: Sequence[int],
                   grid: Tuple[int, int], out_file: str):
    """Heat-maps of the attention weights at the given (1-based) generation steps"""
    steps = [s for s in steps if 1 <= s <= attention.shape[0]]
    figure, axes = plt.subplots(1, len(steps), figsize=(3 * len(steps), 3), squeeze=False)
    for axis, step in zip(axes[0], steps):
        axis.imshow(_display(image), origin="upper")
        heat = attention_map(attention[step - 1], grid, image.shape[:2])
        axis.imshow(heat, cmap="jet", alpha=0.5, origin="upper")
        axis.set_title(f"step {step}")
        axis.set_axis_off()
    _save(figure, out_file)


def plot_speed_sweep(results: Dict[float, Tuple[List[np.ndarray], float]], out_file: str):
    """Top view of the paths generated for one scene at each requested speed"""
    figure, axis = plt.subplots(figsize=(4.5, 4.5))
    colors = plt.cm.viridis(np.linspace(0.1, 0.9, max(len(results), 1)))
    for color, (speed, (paths, curvature)) in zip(colors, sorted(results.items())):
        for i, positions in enumerate(paths):
            label = f"{speed:g} m/s (curvature {curvature:.3f})" if i == 0 else None
            axis.plot(positions[:, 0], positions[:, 1], color=color, alpha=alpha_marker, label=label)
    axis.set_aspect("equal")
    axis.set_xlabel("x (m, right)")
    axis.set_ylabel("y (m, forward)")
    axis.legend(loc="lower right")
    _save(figure, out_file)
