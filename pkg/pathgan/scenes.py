# Procedural driving scenes, ground-truth maneuvers and sample assembly
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from skimage.draw import ellipse

from .config import SceneConfig, config
from .exceptions import GenerationError, InvalidInputError
from .geometry import (LabeledTrajectory, Path, Pose, build_egocentric_transform,
                       label_positions, resample_unit_arc)

logger = logging.getLogger(__name__)


class Action(IntEnum):
    """The nine driving actions, in their fixed order"""
    GO = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    U_TURN = 3
    LANE_CHANGE_LEFT = 4
    LANE_CHANGE_RIGHT = 5
    AVOIDANCE = 6
    LEFT_WAY = 7
    RIGHT_WAY = 8

    @property
    def label(self) -> str:
        return ACTION_NAMES[self.value]

    @classmethod
    def from_name(cls, name: str) -> "Action":
        try:
            return cls(ACTION_NAMES.index(name))
        except ValueError:
            raise InvalidInputError(f"Unknown action: {name}") from None


ACTION_NAMES = ["Go", "TurnLeft", "TurnRight", "UTurn", "LaneChangeLeft",
                "LaneChangeRight", "Avoidance", "LeftWay", "RightWay"]
NUM_ACTIONS = len(ACTION_NAMES)


def validate_action(action) -> int:
    value = int(action)
    if not 0 <= value < NUM_ACTIONS:
        raise InvalidInputError(f"Action id must lie in [0, {NUM_ACTIONS - 1}], got {action}")
    return value


def one_hot(actions) -> np.ndarray:
    """One-hot rows of length 9 for an action id or an array of ids"""
    ids = np.asarray(actions, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= NUM_ACTIONS):
        raise InvalidInputError(f"Action ids must lie in [0, {NUM_ACTIONS - 1}]")
    return np.eye(NUM_ACTIONS)[ids]


class RoadTopology(str, Enum):
    STRAIGHT = "straight"
    INTERSECTION = "intersection"
    CURVE = "curve"
    FORK = "fork"


# Maneuvers each road topology can host
FEASIBLE_MANEUVERS = {
    RoadTopology.STRAIGHT: {Action.GO, Action.U_TURN, Action.LANE_CHANGE_LEFT,
                            Action.LANE_CHANGE_RIGHT, Action.AVOIDANCE},
    RoadTopology.INTERSECTION: {Action.GO, Action.TURN_LEFT, Action.TURN_RIGHT, Action.U_TURN},
    RoadTopology.CURVE: {Action.GO},
    RoadTopology.FORK: {Action.LEFT_WAY, Action.RIGHT_WAY},
}

FORK_SWEEP = 0.6
CURVE_SWEEP = 1.2
MIN_MEDIAN = 0.5


@dataclass(frozen=True)
class Obstacle:
    """Obstacle footprint in the ego frame"""
    x: float
    y: float
    radius: float = 0.9


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to synthesise one scene; the seed fixes the remaining randomness"""
    seed: int
    topology: RoadTopology
    maneuver: Action
    lane_count: int = 2
    ego_lane: int = 0
    turn_radius: float = 12.0
    lane_offset: float = 0.0
    entry_speed: float = 8.0
    approach: float = 1.0
    curve_side: int = 1
    obstacles: Tuple[Obstacle, ...] = ()

    @property
    def two_way(self) -> bool:
        return self.lane_count >= 2 and self.topology in (RoadTopology.STRAIGHT, RoadTopology.INTERSECTION)

    @property
    def median(self) -> float:
        """Gap between the ego carriageway and the opposing one"""
        if self.maneuver == Action.U_TURN:
            return 2.0 * self.turn_radius - (self.ego_lane + 1) * config.LANE_WIDTH
        return 1.0

    def validate(self):
        """Raise GenerationError when the maneuver cannot be realised on this road"""
        if not 1 <= self.lane_count <= 4:
            raise GenerationError(f"lane_count must lie in [1, 4], got {self.lane_count}")
        if not 0 <= self.ego_lane < self.lane_count:
            raise GenerationError(f"ego_lane {self.ego_lane} outside {self.lane_count} lanes")
        if not 0.1 <= self.entry_speed <= 40.0:
            raise GenerationError(f"entry_speed out of range: {self.entry_speed}")
        if not 0.0 <= self.approach <= 40.0:
            raise GenerationError(f"approach out of range: {self.approach}")
        if not 2.0 <= self.turn_radius <= 80.0:
            raise GenerationError(f"turn_radius out of range: {self.turn_radius}")
        if self.maneuver not in FEASIBLE_MANEUVERS[self.topology]:
            raise GenerationError(
                f"{self.maneuver.label} is not feasible on a {self.topology.value} road")
        if self.maneuver == Action.U_TURN:
            if not self.two_way:
                raise GenerationError("UTurn needs an opposing carriageway (two or more lanes)")
            if self.median < MIN_MEDIAN:
                raise GenerationError(
                    f"UTurn radius {self.turn_radius} too small to reach the opposing lanes")
        if self.maneuver == Action.LANE_CHANGE_LEFT and self.ego_lane == 0:
            raise GenerationError("LaneChangeLeft needs a lane to the left")
        if self.maneuver == Action.LANE_CHANGE_RIGHT and self.ego_lane == self.lane_count - 1:
            raise GenerationError("LaneChangeRight needs a lane to the right")
        if self.maneuver in (Action.LANE_CHANGE_LEFT, Action.LANE_CHANGE_RIGHT, Action.AVOIDANCE) \
                and self.lane_offset == 0.0:
            raise GenerationError(f"{self.maneuver.label} needs a non-zero lane_offset")
        if self.curve_side not in (-1, 1):
            raise GenerationError(f"curve_side must be -1 or 1, got {self.curve_side}")

    @classmethod
    def random(cls, seed: int, maneuver: Action,
               scene_config: Optional[SceneConfig] = None) -> "SceneSpec":
        """Draw a feasible spec for a maneuver; parameters depend only on the seed"""
        scene_config = scene_config or SceneConfig()
        rng = np.random.default_rng([seed, 7])
        w = config.LANE_WIDTH
        speed = scene_config.speed_min + (scene_config.speed_max - scene_config.speed_min) \
            * rng.beta(2.65, 2.34)
        approach = float(rng.uniform(0.0, 2.0))
        lane_count = int(rng.integers(1, 4))
        ego_lane = int(rng.integers(0, lane_count))
        params = dict(seed=seed, maneuver=maneuver, entry_speed=float(speed), approach=approach,
                      lane_count=lane_count, ego_lane=ego_lane)

        if maneuver == Action.GO:
            topology = [RoadTopology.STRAIGHT, RoadTopology.INTERSECTION, RoadTopology.CURVE][
                int(rng.choice(3, p=[0.5, 0.25, 0.25]))]
            params.update(topology=topology, approach=float(rng.uniform(3.0, 15.0)),
                          turn_radius=float(rng.uniform(20.0, 40.0) + speed),
                          curve_side=int(rng.choice([-1, 1])))
        elif maneuver in (Action.TURN_LEFT, Action.TURN_RIGHT):
            radius = float(np.clip(4.0 + 0.8 * speed + rng.uniform(-1.0, 1.0), 6.0, 20.0))
            params.update(topology=RoadTopology.INTERSECTION, turn_radius=radius,
                          ego_lane=0 if maneuver == Action.TURN_LEFT else lane_count - 1)
        elif maneuver == Action.U_TURN:
            lane_count = int(rng.integers(2, 4))
            low = max(4.0, ((1 * w) + MIN_MEDIAN) / 2.0)
            params.update(topology=[RoadTopology.STRAIGHT, RoadTopology.INTERSECTION][int(rng.integers(2))],
                          lane_count=lane_count, ego_lane=0,
                          turn_radius=float(rng.uniform(low, low + 2.5)))
        elif maneuver in (Action.LANE_CHANGE_LEFT, Action.LANE_CHANGE_RIGHT):
            lane_count = int(rng.integers(2, 4))
            if maneuver == Action.LANE_CHANGE_LEFT:
                ego_lane, offset = int(rng.integers(1, lane_count)), -w
            else:
                ego_lane, offset = int(rng.integers(0, lane_count - 1)), w
            params.update(topology=RoadTopology.STRAIGHT, lane_count=lane_count,
                          ego_lane=ego_lane, lane_offset=offset)
        elif maneuver == Action.AVOIDANCE:
            magnitude = float(rng.uniform(1.8, 2.6))
            to_left = ego_lane >= 1 or lane_count >= 2
            params.update(topology=RoadTopology.STRAIGHT,
                          lane_offset=-magnitude if to_left else magnitude)
        else:
            params.update(topology=RoadTopology.FORK, lane_count=1, ego_lane=0,
                          turn_radius=float(rng.uniform(15.0, 30.0)))

        spec = cls(**params)
        obstacles = list(maneuver_obstacles(spec))
        trajectory = build_trajectory(spec, scene_config.min_trajectory_length)
        tree = cKDTree(trajectory.positions)
        for _ in range(int(rng.integers(0, 3))):
            lane = int(rng.integers(0, spec.lane_count))
            candidate = Obstacle(x=float((lane - spec.ego_lane) * w + rng.uniform(-0.5, 0.5)),
                                 y=float(rng.uniform(8.0, 40.0)), radius=0.8)
            clear_of_path = tree.query([candidate.x, candidate.y])[0] >= 2.5
            clear_of_others = all(math.hypot(o.x - candidate.x, o.y - candidate.y) >= 3.0
                                  for o in obstacles)
            if clear_of_path and clear_of_others:
                obstacles.append(candidate)
        return replace(spec, obstacles=tuple(obstacles))


@dataclass
class Scene:
    """Rendered scene with its ground-truth trajectory (global frame)"""
    spec: SceneSpec
    image: np.ndarray
    trajectory: LabeledTrajectory
    pose: Pose
    speed: float

    def ego_trajectory(self) -> LabeledTrajectory:
        return self.trajectory.transformed(build_egocentric_transform(self.pose))


@dataclass
class Sample:
    """(I, P_a, a, A, s) training/evaluation tuple"""
    seed: int
    path: Path
    global_intention: int
    local_intentions: np.ndarray
    speed: float
    maneuver: int
    image: Optional[np.ndarray] = field(default=None, repr=False)


class _Turtle:
    """Emits a densely sampled labeled polyline from straight, arc and lateral primitives"""

    def __init__(self, start=(0.0, 0.0), heading=(0.0, 1.0), step: float = 0.1):
        self.position = np.asarray(start, dtype=np.float64)
        self.heading = np.asarray(heading, dtype=np.float64)
        self.heading = self.heading / np.linalg.norm(self.heading)
        self.step = step
        self.points: List[np.ndarray] = [self.position.copy()]
        self.labels: List[int] = [int(Action.GO)]
        self.length = 0.0

    @property
    def right(self) -> np.ndarray:
        return np.array([self.heading[1], -self.heading[0]])

    def _emit(self, points: np.ndarray, label: int):
        for point in points:
            self.length += float(np.linalg.norm(point - self.points[-1]))
            self.points.append(point)
            self.labels.append(int(label))
        self.position = self.points[-1].copy()
        if len(self.labels) == len(points) + 1:
            self.labels[0] = int(label)

    def straight(self, length: float, label: int = Action.GO) -> "_Turtle":
        if length <= 0:
            return self
        n = max(1, math.ceil(length / self.step))
        t = np.arange(1, n + 1)[:, None] / n
        self._emit(self.position + t * length * self.heading, label)
        return self

    def arc(self, radius: float, sweep: float, side: int, label: int) -> "_Turtle":
        """Circular arc; side=+1 turns right (clockwise), side=-1 turns left"""
        center = self.position + side * radius * self.right
        n = max(1, math.ceil(radius * sweep / self.step))
        phi = -side * sweep * np.arange(1, n + 1) / n
        rel = self.position - center
        cos, sin = np.cos(phi), np.sin(phi)
        points = center + np.stack([rel[0] * cos - rel[1] * sin, rel[0] * sin + rel[1] * cos], axis=1)
        self._emit(points, label)
        a = -side * sweep
        h = self.heading
        self.heading = np.array([h[0] * math.cos(a) - h[1] * math.sin(a),
                                 h[0] * math.sin(a) + h[1] * math.cos(a)])
        return self

    def lateral(self, length: float, offset: float, label: int, bump: bool = False) -> "_Turtle":
        """Smooth sideways shift (or out-and-back bump) while advancing `length` metres"""
        n = max(1, math.ceil(length / self.step))
        t = np.arange(1, n + 1)[:, None] / n
        blend = (1.0 - np.cos((2.0 if bump else 1.0) * math.pi * t)) / 2.0
        self._emit(self.position + t * length * self.heading + blend * offset * self.right, label)
        return self

    def extend_to(self, total: float, label: int = Action.GO) -> "_Turtle":
        return self.straight(total - self.length + 1.0, label)

    def trajectory(self) -> LabeledTrajectory:
        return LabeledTrajectory(np.array(self.points), np.array(self.labels))


def lane_change_length(speed: float) -> float:
    return max(10.0, 2.0 * speed)


def avoidance_length(speed: float) -> float:
    return max(12.0, 2.5 * speed)


def maneuver_obstacles(spec: SceneSpec) -> Sequence[Obstacle]:
    """Obstacles implied by the maneuver itself"""
    if spec.maneuver == Action.AVOIDANCE:
        return [Obstacle(0.0, spec.approach + avoidance_length(spec.entry_speed) / 2.0, 0.9)]
    return []


def build_trajectory(spec: SceneSpec, min_length: float) -> LabeledTrajectory:
    """Ground-truth ego-frame trajectory realising the spec's maneuver"""
    turtle = _Turtle()
    maneuver = spec.maneuver
    turtle.straight(spec.approach, Action.GO)

    if maneuver == Action.GO and spec.topology == RoadTopology.CURVE:
        turtle.arc(spec.turn_radius, CURVE_SWEEP, spec.curve_side, Action.GO)
    elif maneuver == Action.TURN_RIGHT:
        turtle.arc(spec.turn_radius, math.pi / 2.0, 1, maneuver)
    elif maneuver == Action.TURN_LEFT:
        turtle.arc(spec.turn_radius, math.pi / 2.0, -1, maneuver)
    elif maneuver == Action.U_TURN:
        turtle.arc(spec.turn_radius, math.pi, -1, maneuver)
    elif maneuver in (Action.LANE_CHANGE_LEFT, Action.LANE_CHANGE_RIGHT):
        turtle.lateral(lane_change_length(spec.entry_speed), spec.lane_offset, maneuver)
    elif maneuver == Action.AVOIDANCE:
        turtle.lateral(avoidance_length(spec.entry_speed), spec.lane_offset, maneuver, bump=True)
    elif maneuver == Action.LEFT_WAY:
        turtle.arc(spec.turn_radius, FORK_SWEEP, -1, maneuver)
    elif maneuver == Action.RIGHT_WAY:
        turtle.arc(spec.turn_radius, FORK_SWEEP, 1, maneuver)

    turtle.extend_to(min_length, Action.GO)
    return turtle.trajectory()


@dataclass
class RoadPiece:
    """Carriageway along a spine polyline; offsets are lateral (right positive)"""
    spine: np.ndarray
    left: float
    right: float
    separators: Tuple[float, ...] = ()

    def offset(self, distance: float) -> np.ndarray:
        tangent = np.gradient(self.spine, axis=0)
        tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
        normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
        return self.spine + distance * normal

    def line_points(self) -> np.ndarray:
        return np.vstack([self.offset(d) for d in (self.left, self.right, *self.separators)])


def _carriageway(spine: np.ndarray, left: float, lanes: int) -> RoadPiece:
    w = config.LANE_WIDTH
    return RoadPiece(spine, left, left + lanes * w, tuple(left + k * w for k in range(1, lanes)))


def road_layout(spec: SceneSpec) -> List[RoadPiece]:
    """Carriageways visible in the scene, in the ego frame"""
    w = config.LANE_WIDTH
    left = -(spec.ego_lane + 0.5) * w
    pieces: List[RoadPiece] = []

    if spec.topology == RoadTopology.CURVE:
        spine = _Turtle(start=(0.0, -2.0)).straight(spec.approach + 2.0) \
            .arc(spec.turn_radius, CURVE_SWEEP, spec.curve_side, Action.GO).straight(40.0)
        return [_carriageway(spine.trajectory().positions, left, spec.lane_count)]

    if spec.topology == RoadTopology.FORK:
        trunk = _Turtle(start=(0.0, -2.0)).straight(spec.approach + 2.0)
        pieces.append(_carriageway(trunk.trajectory().positions, left, spec.lane_count))
        for side in (-1, 1):
            branch = _Turtle(start=(0.0, spec.approach)).arc(spec.turn_radius, FORK_SWEEP, side, Action.GO) \
                .straight(40.0)
            pieces.append(_carriageway(branch.trajectory().positions, -0.5 * w, 1))
        return pieces

    spine = _Turtle(start=(0.0, -2.0)).straight(82.0).trajectory().positions
    pieces.append(_carriageway(spine, left, spec.lane_count))
    if spec.two_way:
        opposing_right = left - spec.median
        pieces.append(_carriageway(spine, opposing_right - spec.lane_count * w, spec.lane_count))

    if spec.topology == RoadTopology.INTERSECTION:
        if spec.maneuver == Action.TURN_RIGHT:
            crossing_y = spec.approach + spec.turn_radius + 0.5 * w
        elif spec.maneuver == Action.TURN_LEFT:
            crossing_y = spec.approach + spec.turn_radius - 0.5 * w
        else:
            crossing_y = spec.approach + 8.0 + (spec.seed % 13)
        crossing = _Turtle(start=(-60.0, crossing_y), heading=(1.0, 0.0)).straight(120.0)
        pieces.append(_carriageway(crossing.trajectory().positions, -w, 2))
    return pieces


class SceneRenderer:
    """Stylised front-view raster: drivable area, lane markings and obstacle blobs.

    Channel 0 shades the drivable area, channel 1 holds lane markings, channel 2 obstacles.
    """

    MAX_RANGE = 80.0
    OBSTACLE_HEIGHT = 1.4

    def __init__(self, scene_config: Optional[SceneConfig] = None):
        self.config = scene_config or SceneConfig()
        h, w = self.config.image_height, self.config.image_width
        self.horizon = 0.35 * h
        self.focal = w / 2.0
        self.camera_height = config.CAMERA_HEIGHT

        rows, cols = np.mgrid[0:h, 0:w]
        below = (rows + 0.5) - self.horizon
        with np.errstate(divide="ignore", invalid="ignore"):
            depth = np.where(below > 0, self.focal * self.camera_height / below, np.inf)
        lateral = ((cols + 0.5) - w / 2.0) * depth / self.focal
        self.ground_mask = depth <= self.MAX_RANGE
        self.ground = np.stack([lateral[self.ground_mask], depth[self.ground_mask]], axis=1)
        self.footprint = self.ground[:, 1] / self.focal

    def project(self, points) -> np.ndarray:
        """Pixel (column, row) of ego-frame ground points; NaN for points behind the camera"""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        depth = np.where(points[:, 1] > 0.2, points[:, 1], np.nan)
        u = self.config.image_width / 2.0 + self.focal * points[:, 0] / depth
        v = self.horizon + self.focal * self.camera_height / depth
        return np.stack([u, v], axis=1)

    def render(self, pieces: Sequence[RoadPiece], obstacles: Sequence[Obstacle],
               rng: np.random.Generator) -> np.ndarray:
        h, w = self.config.image_height, self.config.image_width
        image = np.zeros((h, w, 3), dtype=np.float64)

        # Drivable area
        drivable = np.zeros(len(self.ground), dtype=bool)
        for piece in pieces:
            center = piece.offset((piece.left + piece.right) / 2.0)
            distance, _ = cKDTree(center).query(self.ground)
            drivable |= distance <= (piece.right - piece.left) / 2.0
        shade = np.where(drivable, 0.55, 0.15)
        image[..., 0] = 0.05
        image[..., 0][self.ground_mask] = shade

        # Lane markings
        lines = np.vstack([piece.line_points() for piece in pieces])
        distance, _ = cKDTree(lines).query(self.ground)
        marking = distance <= np.maximum(0.12, 0.7 * self.footprint)
        image[..., 1][self.ground_mask] = marking.astype(np.float64)

        # Obstacles as blobs standing on their footprint
        for obstacle in obstacles:
            if obstacle.y <= 0.5:
                continue
            base = self.horizon + self.focal * self.camera_height / obstacle.y
            top = self.horizon + self.focal * (self.camera_height - self.OBSTACLE_HEIGHT) / obstacle.y
            col = w / 2.0 + self.focal * obstacle.x / obstacle.y
            half_width = max(0.75, self.focal * obstacle.radius / obstacle.y)
            half_height = max(0.75, (base - top) / 2.0)
            rr, cc = ellipse((base + top) / 2.0, col, half_height, half_width, shape=(h, w))
            image[rr, cc, 2] = 1.0

        image += rng.normal(0.0, 0.02, size=image.shape)
        return np.clip(image, 0.0, 1.0).astype(np.float32)


class SceneGenerator:
    """Synthesises scenes from specs"""

    def __init__(self, scene_config: Optional[SceneConfig] = None):
        self.config = scene_config or SceneConfig()
        self.renderer = SceneRenderer(self.config)

    def generate(self, spec: SceneSpec) -> Scene:
        """Render a scene and its ground-truth trajectory; deterministic in the spec"""
        spec.validate()
        rng = np.random.default_rng(spec.seed)
        trajectory = build_trajectory(spec, self.config.min_trajectory_length)
        if trajectory.arc_length() < self.config.min_trajectory_length:
            raise GenerationError(f"Trajectory for seed {spec.seed} is too short")

        image = self.renderer.render(road_layout(spec), spec.obstacles, rng)
        pose = Pose(x=float(rng.uniform(-500.0, 500.0)), y=float(rng.uniform(-500.0, 500.0)),
                    yaw=float(rng.uniform(-math.pi, math.pi)),
                    pitch=float(rng.normal(0.0, 0.01)), roll=float(rng.normal(0.0, 0.01)))
        transform = build_egocentric_transform(pose)
        world = LabeledTrajectory(transform.inverse_apply(trajectory.positions), trajectory.labels)
        return Scene(spec=spec, image=image, trajectory=world, pose=pose, speed=spec.entry_speed)


def generate_scene(spec: SceneSpec, scene_config: Optional[SceneConfig] = None) -> Scene:
    return SceneGenerator(scene_config).generate(spec)


def select_global_intention(candidates: Sequence[int], mode: str = "test",
                            rng: Optional[np.random.Generator] = None) -> int:
    """Global intention from the first F local intentions.

    Train mode draws a candidate uniformly by position, so each action is chosen with
    probability count/F. Test mode returns the most frequent action; ties go to the action
    that occurs first.
    """
    candidates = [int(c) for c in candidates]
    if not candidates:
        raise InvalidInputError("Global intention needs at least one candidate")
    for c in candidates:
        validate_action(c)
    if mode == "train":
        rng = rng if rng is not None else np.random.default_rng()
        return candidates[int(rng.integers(len(candidates)))]
    if mode != "test":
        raise InvalidInputError(f"Mode must be 'train' or 'test', got {mode!r}")
    counts = Counter(candidates)
    return max(counts, key=lambda action: (counts[action], -candidates.index(action)))


def assemble_sample(scene: Scene, path_length: int, f: int, mode: str = "test",
                    rng: Optional[np.random.Generator] = None) -> Sample:
    """Egocentric unit-spaced path, per-position labels and the global intention of a scene"""
    if not 1 <= f <= path_length:
        raise InvalidInputError(f"F must lie in [1, {path_length}], got {f}")
    ego = scene.ego_trajectory()
    path = resample_unit_arc(ego.positions, path_length)
    labels = label_positions(path, ego)
    intention = select_global_intention(labels[:f], mode, rng)
    return Sample(seed=scene.spec.seed, path=path, global_intention=intention,
                  local_intentions=labels, speed=scene.speed, maneuver=int(scene.spec.maneuver),
                  image=scene.image)
