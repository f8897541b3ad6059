# Geometry helpers: egocentric transforms, unit-spaced paths, labels and steering
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .config import SteeringConfig
from .exceptions import InsufficientLengthError, InvalidInputError


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]"""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose:
    """Vehicle pose in the global frame.

    Yaw is measured counter-clockwise from the global +y axis, so yaw = 0 heads along +y.
    """
    x: float
    y: float
    yaw: float
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        values = (self.x, self.y, self.yaw, self.pitch, self.roll)
        if not all(math.isfinite(float(v)) for v in values):
            raise InvalidInputError(f"Pose fields must be finite, got {values}")
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))

    @property
    def heading(self) -> np.ndarray:
        return np.array([-math.sin(self.yaw), math.cos(self.yaw)])


@dataclass(frozen=True)
class EgoTransform:
    """Planar rigid transform from the global frame into the ego frame: ego = R (p - t)"""
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points) -> np.ndarray:
        """Map global points (N, 2) or (2,) into the ego frame"""
        points = np.asarray(points, dtype=np.float64)
        return (points - self.translation) @ self.rotation.T

    def inverse_apply(self, points) -> np.ndarray:
        """Map ego points back into the global frame"""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation + self.translation

    def inverse(self) -> "EgoTransform":
        """Transform from the ego frame into the global frame"""
        rotation = self.rotation.T
        return EgoTransform(rotation=rotation, translation=-self.rotation @ self.translation)


def build_egocentric_transform(pose: Pose) -> EgoTransform:
    """Transform whose ego frame has the pose at the origin, heading along +y.

    Pitch and roll are accepted but projected out: the synthetic world is flat.
    """
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    # Rows are the ego +x (right) and +y (forward) axes expressed in global coordinates
    rotation = np.array([[c, s], [-s, c]])
    return EgoTransform(rotation=rotation, translation=np.array([pose.x, pose.y], dtype=np.float64))


@dataclass
class Path:
    """L egocentric positions; the origin p_0 is implicit"""
    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise InvalidInputError(f"Path positions must have shape (L, 2), got {self.positions.shape}")
        if not np.all(np.isfinite(self.positions)):
            raise InvalidInputError("Path positions must be finite")

    def __len__(self) -> int:
        return self.positions.shape[0]

    def with_origin(self) -> np.ndarray:
        return np.vstack([np.zeros((1, 2)), self.positions])

    def spacing_error(self) -> float:
        """Largest deviation of consecutive spacing (origin included) from one metre"""
        steps = np.linalg.norm(np.diff(self.with_origin(), axis=0), axis=1)
        return float(np.max(np.abs(steps - 1.0)))


@dataclass
class LabeledTrajectory:
    """Densely sampled trajectory with one action id per position"""
    positions: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise InvalidInputError(f"Trajectory positions must have shape (N, 2), got {self.positions.shape}")
        if self.labels.shape != (self.positions.shape[0],):
            raise InvalidInputError("Trajectory needs exactly one label per position")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 8):
            raise InvalidInputError("Trajectory labels must be action ids in [0, 8]")

    def __len__(self) -> int:
        return self.positions.shape[0]

    def arc_length(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.positions, axis=0), axis=1).sum())

    def transformed(self, transform: EgoTransform) -> "LabeledTrajectory":
        return LabeledTrajectory(transform.apply(self.positions), self.labels.copy())


_VERTEX_EPS = 1e-12


def _first_unit_crossing(points: np.ndarray, center: np.ndarray, segment: int, t_start: float):
    """First polyline location after (segment, t_start) at distance exactly 1 from center"""
    for i in range(segment, points.shape[0] - 1):
        a, b = points[i], points[i + 1]
        d = b - a
        dd = float(d @ d)
        if dd == 0.0:
            continue
        f = a - center
        # |f + t d|^2 = 1
        half_b = float(f @ d)
        c = float(f @ f) - 1.0
        disc = half_b * half_b - dd * c
        if disc < 0.0:
            continue
        root = math.sqrt(disc)
        lo = t_start if i == segment else 0.0
        for t in sorted(((-half_b - root) / dd, (-half_b + root) / dd)):
            # Crossings exactly at a vertex may round to either neighbouring segment
            if lo - _VERTEX_EPS <= t <= 1.0 + _VERTEX_EPS and (i != segment or t > t_start):
                t = min(max(t, 0.0), 1.0)
                return i, t, a + t * d
    return None


def resample_unit_arc(trajectory, length: int) -> Path:
    """Place `length` positions along a polyline starting at the origin, each one metre
    (Euclidean) from its predecessor, walking forward along the polyline.

    On straight input this coincides with arc-length parameters 1..L.
    """
    points = np.asarray(trajectory, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] < 2:
        raise InvalidInputError(f"Trajectory must have shape (N >= 2, 2), got {points.shape}")
    if length < 1:
        raise InvalidInputError(f"Path length must be positive, got {length}")
    if np.linalg.norm(points[0]) > 1e-6:
        raise InvalidInputError(f"Trajectory must start at the origin, starts at {points[0]}")

    total = float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())
    if total < length - 1e-9:
        raise InsufficientLengthError(f"Trajectory covers {total:.3f} m, need {length} m")

    positions = np.empty((length, 2))
    center, segment, t = np.zeros(2), 0, 0.0
    for l in range(length):
        crossing = _first_unit_crossing(points, center, segment, t)
        if crossing is None:
            raise InsufficientLengthError(
                f"Trajectory ends after {l} unit steps, need {length}")
        segment, t, center = crossing
        positions[l] = center
    return Path(positions)


def label_positions(path: Path, source: LabeledTrajectory) -> np.ndarray:
    """Action label of the source position nearest to each path position (ties: lowest index)"""
    if len(source) == 0:
        raise InvalidInputError("Cannot label a path from an empty trajectory")
    distances = cdist(path.positions, source.positions)
    return source.labels[np.argmin(distances, axis=1)]


class SteeringOracle:
    """Pure-pursuit steering estimate for a path, scaled to [-1, 1].

    Positive values steer right (+x). The look-ahead point sits at arc length
    max(lookahead_time * speed, lookahead_min) along the path from the origin.
    """

    def __init__(self, steering_config: Optional[SteeringConfig] = None):
        self.config = steering_config or SteeringConfig()

    def lookahead_point(self, path: Path, distance: float) -> np.ndarray:
        points = path.with_origin()
        steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(steps)])
        if distance >= arc[-1]:
            return points[-1]
        return np.array([np.interp(distance, arc, points[:, 0]),
                         np.interp(distance, arc, points[:, 1])])

    def steering(self, path: Path, speed: float) -> float:
        if len(path) == 0:
            raise InvalidInputError("Cannot steer along an empty path")
        if not speed > 0.0:
            raise InvalidInputError(f"Speed must be positive, got {speed}")

        lookahead = max(self.config.lookahead_time * speed, self.config.lookahead_min)
        target = self.lookahead_point(path, lookahead)
        chord = float(np.hypot(target[0], target[1]))
        if chord < 1e-9:
            raise InvalidInputError("Path has zero length")

        alpha = math.atan2(target[0], target[1])
        angle = math.atan(2.0 * self.config.wheelbase * math.sin(alpha) / chord)
        return float(np.clip(angle / self.config.max_steer, -1.0, 1.0))


def path_to_steering(path: Path, speed: float,
                     steering_config: Optional[SteeringConfig] = None) -> float:
    """Scaled steering value the oracle reads off a path at the given speed"""
    oracle = steering_oracle if steering_config is None else SteeringOracle(steering_config)
    return oracle.steering(path, speed)


def circle_path(radius: float, length: int, side: int = 1) -> Path:
    """Unit-chord path along a circle tangent to +y at the origin (side=+1 turns right)"""
    step = 2.0 * math.asin(0.5 / radius)
    angles = step * np.arange(1, length + 1)
    x = side * radius * (1.0 - np.cos(angles))
    y = radius * np.sin(angles)
    return Path(np.stack([x, y], axis=1))


def straight_path(length: int) -> Path:
    return Path(np.stack([np.zeros(length), np.arange(1, length + 1, dtype=np.float64)], axis=1))


def mirror(path: Path) -> Path:
    """Reflect a path across the forward axis (x -> -x)"""
    positions = path.positions.copy()
    positions[:, 0] *= -1.0
    return Path(positions)


# Singleton instance
steering_oracle = SteeringOracle()
