# Configuration settings for the PathGAN planner
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

from decouple import Csv, RepositoryEnv, strtobool
from decouple import config as env

from .exceptions import ConfigError


class Config:
    """Process-level settings read from the environment"""

    # Only the output directory of an experiment may be overridden from the environment
    OUTPUT_DIR: Optional[str] = env("PATHGAN_OUTPUT_DIR", default=None)

    LOG_LEVEL: str = env("PATHGAN_LOG_LEVEL", default="INFO")
    NUM_THREADS: int = env("PATHGAN_NUM_THREADS", default=0, cast=int)

    # Egocentric frame: forward is +y, left is -x
    LANE_WIDTH: float = 3.5
    CAMERA_HEIGHT: float = 1.6


config = Config()


def _boolean(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    return bool(strtobool(str(value)))


_INTS = Csv(cast=int)
_STRINGS = Csv()

# KEY: (cast, default, description)
SCHEMA: Dict[str, Tuple[Callable[[Any], Any], Any, str]] = {
    # Experiment
    "SEED": (int, 0, "master seed for scenes, noise and parameter init"),
    "OUTPUT_DIR": (str, "runs/default", "directory for checkpoints, reports and figures"),
    "DATASET_DIR": (str, "data/dataset", "synthetic dataset directory"),
    "CHECKPOINT": (str, "", "checkpoint consumed by eval, plot and bench-speed"),
    "PRETRAIN_CHECKPOINT": (str, "", "single-path checkpoint whose FEN seeds adversarial training"),
    # Scenes and dataset
    "N_SAMPLES": (int, 900, "total number of samples across all splits"),
    "TEST_FRACTION": (float, 0.2, "share of samples in the test split"),
    "VAL_FRACTION": (float, 0.1, "share of the training split carved out for validation"),
    "BALANCE_TOLERANCE": (float, 0.1, "allowed relative shortfall of a per-action quota"),
    "MAX_ATTEMPTS_FACTOR": (int, 40, "scene proposals allowed per requested sample"),
    "WORKERS": (int, 1, "processes used for scene synthesis"),
    "IMAGE_HEIGHT": (int, 64, "scene raster height in pixels"),
    "IMAGE_WIDTH": (int, 64, "scene raster width in pixels"),
    "PATH_LENGTH": (int, 20, "number of positions per path (L)"),
    "TRAJECTORY_MARGIN": (float, 10.0, "extra trajectory length beyond L metres"),
    "SPEED_MIN": (float, 2.0, "lowest ego speed in m/s"),
    "SPEED_MAX": (float, 15.0, "highest ego speed in m/s"),
    "F": (int, 5, "leading local intentions considered for the global intention"),
    # Networks
    "CONV_CHANNELS": (_INTS, "16,32,64,64", "channels of the four FEN conv layers"),
    "FEATURE_DIM": (int, 32, "dimension of each visual context vector"),
    "HIDDEN_DIM": (int, 64, "hidden size of LSTM_P and LSTM_A"),
    "EMBED_DIM": (int, 64, "size of the step embeddings"),
    "NOISE_DIM": (int, 32, "dimension of the noise vector z"),
    "ATTENTION_DIM": (int, 64, "inner size of the additive attention"),
    "D1_HIDDEN_DIM": (int, 64, "hidden size of LSTM_D1"),
    "D2_HIDDEN_DIM": (int, 32, "hidden size of LSTM_D2"),
    # Training
    "ABLATION": (str, "P4", "ablation id: P1, P2, P3-A, P3-B, P3-C or P4"),
    "BATCH_SIZE": (int, 16, "samples per optimizer step"),
    "EPOCHS": (int, 10, "adversarial training epochs"),
    "PRETRAIN_EPOCHS": (int, 5, "single-path pretraining epochs"),
    "MAX_STEPS": (int, 0, "cap on optimizer steps per stage, 0 for none"),
    "LR_MAIN": (float, 1e-4, "Adam learning rate of the PGN and DN"),
    "LR_FEN": (float, 5e-5, "Adam learning rate of the FEN during adversarial training"),
    "BETA1": (float, 0.9, "Adam beta1"),
    "BETA2": (float, 0.999, "Adam beta2"),
    "K_TRAIN": (int, 20, "paths drawn per example for the variety loss"),
    "SATURATING_G_LOSS": (_boolean, False, "use log(1 - D(fake)) instead of -log D(fake) for G"),
    "LAMBDA1": (float, 1e2, "weight of the variety loss"),
    "LAMBDA2": (float, 1e-2, "weight of the LI-sequence adversarial loss in L_G"),
    "LAMBDA3": (float, 5e-3, "weight of the local classification loss"),
    "LAMBDA4": (float, 1.0, "weight of the LI-sequence adversarial loss in L_D"),
    # Evaluation
    "K": (int, 20, "paths generated per test sample"),
    "EVAL_MAX_SAMPLES": (int, 0, "cap on evaluated test samples, 0 for all"),
    "ABLATION_SEEDS": (_INTS, "0,1,2", "training seeds of the ablation matrix"),
    "ABLATION_IDS": (_STRINGS, "P1,P2,P3-A,P3-B,P3-C,P4", "rows of the ablation matrix"),
    "SWEEP_F": (_INTS, "1,5,10,20", "F values of the F sweep"),
    "SWEEP_ABLATIONS": (_STRINGS, "P2,P4", "models of the F sweep"),
    "SPEED_RECORDS": (int, 300, "generations timed by bench-speed"),
    "PLOT_SAMPLES": (int, 4, "test scenes drawn by the plot command"),
    "PLOT_STEPS": (_INTS, "5,10,15,20", "generation steps whose attention is drawn"),
    "PLOT_SPEEDS": (_STRINGS, "3.0,13.0", "low and high speeds of the speed sweep"),
    # Steering oracle
    "WHEELBASE": (float, 2.8, "wheelbase of the steering oracle in metres"),
    "MAX_STEER": (float, 0.55, "steering angle mapped to +-1 in radians"),
    "LOOKAHEAD_TIME": (float, 1.0, "look-ahead gain in seconds"),
    "LOOKAHEAD_MIN": (float, 3.0, "minimum look-ahead distance in metres"),
}


@dataclass(frozen=True)
class SceneConfig:
    image_height: int = 64
    image_width: int = 64
    path_length: int = 20
    trajectory_margin: float = 10.0
    speed_min: float = 2.0
    speed_max: float = 15.0

    @property
    def min_trajectory_length(self) -> float:
        return self.path_length + self.trajectory_margin


@dataclass(frozen=True)
class DatasetConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    seed: int = 0
    n_samples: int = 900
    test_fraction: float = 0.2
    val_fraction: float = 0.1
    balance_tolerance: float = 0.1
    max_attempts_factor: int = 40
    f: int = 5
    workers: int = 1


@dataclass(frozen=True)
class SteeringConfig:
    wheelbase: float = 2.8
    max_steer: float = 0.55
    lookahead_time: float = 1.0
    lookahead_min: float = 3.0


@dataclass(frozen=True)
class ModelConfig:
    image_height: int = 64
    image_width: int = 64
    conv_channels: Tuple[int, ...] = (16, 32, 64, 64)
    feature_dim: int = 32
    hidden_dim: int = 64
    embed_dim: int = 64
    noise_dim: int = 32
    attention_dim: int = 64
    d1_hidden_dim: int = 64
    d2_hidden_dim: int = 32
    path_length: int = 20
    num_actions: int = 9

    @property
    def grid(self) -> Tuple[int, int]:
        return self.image_height // 8, self.image_width // 8


@dataclass(frozen=True)
class EvalConfig:
    k: int = 20
    f: int = 5
    max_samples: int = 0
    speed_records: int = 300


class ExperimentConfig:
    """Key=value experiment configuration with typed views per module"""

    def __init__(self, values: Dict[str, Any]):
        self.values = values

    @classmethod
    def load(cls, path: Optional[str] = None,
             overrides: Optional[Iterable[str]] = None) -> "ExperimentConfig":
        """Read a key=value file, apply KEY=VALUE overrides and cast every key"""
        raw: Dict[str, Any] = {}
        if path:
            if not os.path.isfile(path):
                raise ConfigError(f"Config file not found: {path}")
            raw.update(RepositoryEnv(path).data)

        for item in overrides or []:
            if "=" not in item:
                raise ConfigError(f"Override must look like KEY=VALUE, got: {item!r}")
            key, value = item.split("=", 1)
            raw[key.strip()] = value.strip()

        unknown = sorted(set(raw) - set(SCHEMA))
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")

        values: Dict[str, Any] = {}
        for key, (cast, default, _) in SCHEMA.items():
            value = raw.get(key, default)
            try:
                values[key] = cast(value) if isinstance(value, str) or cast is _boolean else value
            except (TypeError, ValueError) as e:
                raise ConfigError(f"Invalid value for {key}: {value!r} ({e})") from e

        if config.OUTPUT_DIR:
            values["OUTPUT_DIR"] = config.OUTPUT_DIR

        experiment = cls(values)
        experiment.validate()
        return experiment

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def with_overrides(self, **changes: Any) -> "ExperimentConfig":
        """Copy with some keys replaced (used by the ablation and sweep drivers)"""
        unknown = sorted(set(changes) - set(SCHEMA))
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        experiment = ExperimentConfig({**self.values, **changes})
        experiment.validate()
        return experiment

    def validate(self):
        """Reject values outside their documented ranges"""
        v = self.values
        positive = ["N_SAMPLES", "IMAGE_HEIGHT", "IMAGE_WIDTH", "PATH_LENGTH", "F",
                    "FEATURE_DIM", "HIDDEN_DIM", "EMBED_DIM", "NOISE_DIM", "ATTENTION_DIM",
                    "D1_HIDDEN_DIM", "D2_HIDDEN_DIM", "BATCH_SIZE", "K_TRAIN", "K",
                    "WORKERS", "MAX_ATTEMPTS_FACTOR", "SPEED_RECORDS"]
        for key in positive:
            if v[key] <= 0:
                raise ConfigError(f"{key} must be positive, got {v[key]}")
        for key in ["LR_MAIN", "LR_FEN", "WHEELBASE", "MAX_STEER", "LOOKAHEAD_MIN"]:
            if not v[key] > 0:
                raise ConfigError(f"{key} must be positive, got {v[key]}")
        for key in ["LAMBDA1", "LAMBDA2", "LAMBDA3", "LAMBDA4", "LOOKAHEAD_TIME",
                    "TRAJECTORY_MARGIN", "EPOCHS", "PRETRAIN_EPOCHS", "MAX_STEPS",
                    "EVAL_MAX_SAMPLES"]:
            if v[key] < 0:
                raise ConfigError(f"{key} must be non-negative, got {v[key]}")
        if v["F"] > v["PATH_LENGTH"]:
            raise ConfigError(f"F={v['F']} exceeds PATH_LENGTH={v['PATH_LENGTH']}")
        if any(f < 1 or f > v["PATH_LENGTH"] for f in v["SWEEP_F"]):
            raise ConfigError(f"SWEEP_F values must lie in [1, PATH_LENGTH]: {v['SWEEP_F']}")
        if v["IMAGE_HEIGHT"] % 8 or v["IMAGE_WIDTH"] % 8:
            raise ConfigError("IMAGE_HEIGHT and IMAGE_WIDTH must be multiples of 8")
        if len(v["CONV_CHANNELS"]) != 4:
            raise ConfigError(f"CONV_CHANNELS needs four entries, got {v['CONV_CHANNELS']}")
        if not 0.0 <= v["TEST_FRACTION"] < 1.0 or not 0.0 <= v["VAL_FRACTION"] < 1.0:
            raise ConfigError("TEST_FRACTION and VAL_FRACTION must lie in [0, 1)")
        if not 0.0 <= v["BALANCE_TOLERANCE"] < 1.0:
            raise ConfigError("BALANCE_TOLERANCE must lie in [0, 1)")
        if not 0.0 < v["SPEED_MIN"] < v["SPEED_MAX"]:
            raise ConfigError("Speeds must satisfy 0 < SPEED_MIN < SPEED_MAX")
        if not 0.0 < v["BETA1"] < 1.0 or not 0.0 < v["BETA2"] < 1.0:
            raise ConfigError("Adam betas must lie in (0, 1)")
        # Import here to avoid circular imports
        from .training import ABLATIONS
        for ablation in [v["ABLATION"], *v["ABLATION_IDS"], *v["SWEEP_ABLATIONS"]]:
            if ablation not in ABLATIONS:
                raise ConfigError(f"Unknown ablation id: {ablation}")
        try:
            self.plot_speeds()
        except ValueError as e:
            raise ConfigError(f"Invalid PLOT_SPEEDS: {v['PLOT_SPEEDS']}") from e

    def plot_speeds(self) -> List[float]:
        return [float(s) for s in self.values["PLOT_SPEEDS"]]

    def scene_config(self) -> SceneConfig:
        v = self.values
        return SceneConfig(
            image_height=v["IMAGE_HEIGHT"],
            image_width=v["IMAGE_WIDTH"],
            path_length=v["PATH_LENGTH"],
            trajectory_margin=v["TRAJECTORY_MARGIN"],
            speed_min=v["SPEED_MIN"],
            speed_max=v["SPEED_MAX"],
        )

    def dataset_config(self) -> DatasetConfig:
        v = self.values
        return DatasetConfig(
            scene=self.scene_config(),
            seed=v["SEED"],
            n_samples=v["N_SAMPLES"],
            test_fraction=v["TEST_FRACTION"],
            val_fraction=v["VAL_FRACTION"],
            balance_tolerance=v["BALANCE_TOLERANCE"],
            max_attempts_factor=v["MAX_ATTEMPTS_FACTOR"],
            f=v["F"],
            workers=v["WORKERS"],
        )

    def steering_config(self) -> SteeringConfig:
        v = self.values
        return SteeringConfig(
            wheelbase=v["WHEELBASE"],
            max_steer=v["MAX_STEER"],
            lookahead_time=v["LOOKAHEAD_TIME"],
            lookahead_min=v["LOOKAHEAD_MIN"],
        )

    def model_config(self) -> ModelConfig:
        v = self.values
        return ModelConfig(
            image_height=v["IMAGE_HEIGHT"],
            image_width=v["IMAGE_WIDTH"],
            conv_channels=tuple(v["CONV_CHANNELS"]),
            feature_dim=v["FEATURE_DIM"],
            hidden_dim=v["HIDDEN_DIM"],
            embed_dim=v["EMBED_DIM"],
            noise_dim=v["NOISE_DIM"],
            attention_dim=v["ATTENTION_DIM"],
            d1_hidden_dim=v["D1_HIDDEN_DIM"],
            d2_hidden_dim=v["D2_HIDDEN_DIM"],
            path_length=v["PATH_LENGTH"],
        )

    def eval_config(self) -> EvalConfig:
        v = self.values
        return EvalConfig(
            k=v["K"],
            f=v["F"],
            max_samples=v["EVAL_MAX_SAMPLES"],
            speed_records=v["SPEED_RECORDS"],
        )

    def loss_weights(self):
        # Import here to avoid circular imports
        from .losses import LossWeights
        v = self.values
        return LossWeights(v["LAMBDA1"], v["LAMBDA2"], v["LAMBDA3"], v["LAMBDA4"])

    def train_config(self, pretrain: bool = False):
        # Import here to avoid circular imports
        from .training import TrainConfig
        v = self.values
        return TrainConfig(
            batch_size=v["BATCH_SIZE"],
            epochs=v["PRETRAIN_EPOCHS"] if pretrain else v["EPOCHS"],
            max_steps=v["MAX_STEPS"],
            lr_main=v["LR_MAIN"],
            lr_fen=v["LR_FEN"],
            betas=(v["BETA1"], v["BETA2"]),
            seed=v["SEED"],
            ablation=v["ABLATION"],
            f=v["F"],
            k_train=v["K_TRAIN"],
            saturating_generator_loss=v["SATURATING_G_LOSS"],
            weights=self.loss_weights(),
        )
