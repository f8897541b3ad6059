# Command-line experiment driver
import argparse
import logging
import os
import sys
from typing import Callable, Dict, List, Optional

import pandas as pd

from .config import SCHEMA, ExperimentConfig
from .dataset import build_dataset, load_dataset, verify_dataset
from .evaluation import evaluate_model, measure_generation_speed, speed_sweep
from .exceptions import CheckpointError, ConfigError, PathGANError
from .models import load_checkpoint
from .plotting import plot_attention, plot_scene_paths, plot_speed_sweep
from .reports import (format_summary, format_table, summarize_runs, write_metric_reports)
from .scenes import select_global_intention
from .training import pretrain_single, train_adversarial
from .utils import atomic_directory, set_seed

logger = logging.getLogger(__name__)


def _pretrain_checkpoint(experiment: ExperimentConfig) -> Optional[str]:
    """Explicit PRETRAIN_CHECKPOINT, else the pretrain stage's output when present"""
    if experiment["PRETRAIN_CHECKPOINT"]:
        return experiment["PRETRAIN_CHECKPOINT"]
    default = os.path.join(experiment["OUTPUT_DIR"], "pretrain", "pretrain.npz")
    return default if os.path.isfile(default) else None


def _model_checkpoint(experiment: ExperimentConfig) -> str:
    path = experiment["CHECKPOINT"] or os.path.join(experiment["OUTPUT_DIR"], "train", "model.npz")
    if not os.path.isfile(path):
        raise CheckpointError(f"Checkpoint not found: {path}; train a model or set CHECKPOINT")
    return path


def cmd_synth(experiment: ExperimentConfig) -> int:
    digest = build_dataset(experiment.dataset_config(), experiment["DATASET_DIR"])
    dataset = load_dataset(experiment["DATASET_DIR"])
    checked = verify_dataset(dataset)
    print(dataset.action_counts().to_string())
    print(f"dataset={experiment['DATASET_DIR']} samples={checked} digest={digest}")
    return 0


def cmd_pretrain(experiment: ExperimentConfig) -> int:
    dataset = load_dataset(experiment["DATASET_DIR"])
    target = os.path.join(experiment["OUTPUT_DIR"], "pretrain")
    with atomic_directory(target) as staging:
        pretrain_single(dataset, experiment.train_config(pretrain=True), experiment.model_config(), staging)
    print(f"checkpoint={os.path.join(target, 'pretrain.npz')}")
    return 0


def cmd_train(experiment: ExperimentConfig) -> int:
    dataset = load_dataset(experiment["DATASET_DIR"])
    target = os.path.join(experiment["OUTPUT_DIR"], "train")
    with atomic_directory(target) as staging:
        train_adversarial(dataset, experiment.train_config(), experiment.model_config(),
                          _pretrain_checkpoint(experiment), staging)
    print(f"checkpoint={os.path.join(target, 'model.npz')}")
    return 0


def cmd_eval(experiment: ExperimentConfig) -> int:
    dataset = load_dataset(experiment["DATASET_DIR"])
    checkpoint = _model_checkpoint(experiment)
    model = load_checkpoint(checkpoint)
    report = evaluate_model(model, dataset, dataset.split("test"), experiment.eval_config(),
                            experiment.steering_config(), seed=experiment["SEED"],
                            label=os.path.basename(checkpoint))
    report.seed = experiment["SEED"]
    with atomic_directory(os.path.join(experiment["OUTPUT_DIR"], "eval")) as staging:
        frame = write_metric_reports([report], os.path.join(staging, "metrics.csv"))
    print(format_table(frame))
    return 0


def _train_and_evaluate(experiment: ExperimentConfig, dataset, staging: str, name: str):
    run_dir = os.path.join(staging, name)
    result = train_adversarial(dataset, experiment.train_config(), experiment.model_config(),
                               _pretrain_checkpoint(experiment), run_dir)
    report = evaluate_model(result.model, dataset, dataset.split("test"), experiment.eval_config(),
                            experiment.steering_config(), seed=experiment["SEED"], label=name)
    report.ablation = experiment["ABLATION"]
    report.seed = experiment["SEED"]
    return report


def cmd_ablate(experiment: ExperimentConfig) -> int:
    """Every ablation id trained and evaluated once per seed"""
    dataset = load_dataset(experiment["DATASET_DIR"])
    reports = []
    with atomic_directory(os.path.join(experiment["OUTPUT_DIR"], "ablate")) as staging:
        for ablation in experiment["ABLATION_IDS"]:
            for seed in experiment["ABLATION_SEEDS"]:
                logger.info(f"Ablation {ablation}, seed {seed}")
                run = experiment.with_overrides(ABLATION=ablation, SEED=seed)
                reports.append(_train_and_evaluate(run, dataset, staging, f"{ablation}-seed{seed}"))
        runs = write_metric_reports(reports, os.path.join(staging, "runs.csv"))
        summary = summarize_runs(runs)
        summary.to_csv(os.path.join(staging, "summary.csv"), index=False)
        table = format_summary(summary)
        with open(os.path.join(staging, "summary.txt"), "w", encoding="utf-8") as f:
            f.write(table + "\n")
    print(table)
    return 0


def cmd_sweep_f(experiment: ExperimentConfig) -> int:
    """minADE / minFDE for every F in SWEEP_F, training with that F"""
    dataset = load_dataset(experiment["DATASET_DIR"])
    reports = []
    with atomic_directory(os.path.join(experiment["OUTPUT_DIR"], "sweep_f")) as staging:
        for f in experiment["SWEEP_F"]:
            for ablation in experiment["SWEEP_ABLATIONS"]:
                logger.info(f"F sweep: {ablation} with F={f}")
                run = experiment.with_overrides(ABLATION=ablation, F=f)
                reports.append(_train_and_evaluate(run, dataset, staging, f"{ablation}-F{f}"))
        frame = write_metric_reports(reports, os.path.join(staging, "sweep.csv"))
        table = frame.pivot(index="f", columns="ablation", values=["min_ade", "min_fde"])
        table.to_csv(os.path.join(staging, "sweep_table.csv"))
    print(table.to_string())
    return 0


def cmd_plot(experiment: ExperimentConfig) -> int:
    dataset = load_dataset(experiment["DATASET_DIR"])
    model = load_checkpoint(_model_checkpoint(experiment))
    model.eval()
    records = dataset.split("test")[: experiment["PLOT_SAMPLES"]]
    if not records:
        raise PathGANError("The test split is empty; nothing to plot")
    grid = model.model_config.grid
    with atomic_directory(os.path.join(experiment["OUTPUT_DIR"], "plots")) as staging:
        for i, record in enumerate(records):
            image = dataset.image(record)
            gi = select_global_intention(record.li[: experiment["F"]], "test")
            paths = model.generate(image, gi, record.speed, experiment["K"], rng=experiment["SEED"] + i)
            plot_scene_paths(image, record.path, [p.positions for p in paths],
                             os.path.join(staging, f"paths_{record.seed}.png"), experiment.scene_config(),
                             title=f"seed {record.seed}, speed {record.speed:.1f} m/s")
            plot_attention(image, paths[0].attention, experiment["PLOT_STEPS"], grid,
                           os.path.join(staging, f"attention_{record.seed}.png"))
        record = records[0]
        gi = select_global_intention(record.li[: experiment["F"]], "test")
        sweep = speed_sweep(model, dataset.image(record), gi, experiment.plot_speeds(), experiment["K"],
                            seed=experiment["SEED"])
        plot_speed_sweep(sweep, os.path.join(staging, "speed_sweep.png"))
    for speed, (_, curvature) in sorted(sweep.items()):
        print(f"speed={speed:g} mean_abs_curvature={curvature:.4f}")
    return 0


def cmd_bench_speed(experiment: ExperimentConfig) -> int:
    dataset = load_dataset(experiment["DATASET_DIR"])
    checkpoint = _model_checkpoint(experiment)
    model = load_checkpoint(checkpoint)
    records = dataset.split("test") or dataset.records
    samples = [(dataset.image(r), select_global_intention(r.li[: experiment["F"]], "test"), r.speed)
               for r in records]
    timing = measure_generation_speed(model, samples, experiment["K"], experiment["SPEED_RECORDS"],
                                      seed=experiment["SEED"])
    frame = pd.DataFrame([{"label": os.path.basename(checkpoint), "variant": model.variant.value,
                           "k": experiment["K"], "records": timing.records,
                           "gen_time": timing.mean, "gen_time_std": timing.std}])
    with atomic_directory(os.path.join(experiment["OUTPUT_DIR"], "bench")) as staging:
        frame.to_csv(os.path.join(staging, "speed.csv"), index=False)
    print(format_table(frame))
    return 0


COMMANDS: Dict[str, Callable[[ExperimentConfig], int]] = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep-f": cmd_sweep_f,
    "plot": cmd_plot,
    "bench-speed": cmd_bench_speed,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manage.py", description="PathGAN desk-scale experiments")
    parser.add_argument("command", nargs="?", choices=sorted(COMMANDS), help="experiment step to run")
    parser.add_argument("--config", help="key=value experiment file (see configs/)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; may be repeated")
    parser.add_argument("--list-keys", action="store_true", help="print the config schema and exit")
    return parser


def run(command: str, experiment: ExperimentConfig) -> int:
    if command not in COMMANDS:
        raise ConfigError(f"Unknown command: {command}")
    set_seed(experiment["SEED"])
    return COMMANDS[command](experiment)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_keys:
        for key, (_, default, description) in SCHEMA.items():
            print(f"{key}={default}  # {description}")
        return 0
    if not args.command:
        parser.error("a command is required")
    try:
        experiment = ExperimentConfig.load(args.config, args.set)
        return run(args.command, experiment)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return 2
    except PathGANError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
