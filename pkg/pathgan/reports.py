# Report records and their CSV / text serialization
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["min_ade", "min_fde", "div", "mll", "min_mse_s"]
REPORT_COLUMNS = ["label", "ablation", "seed", "k", "f", "samples", *METRIC_COLUMNS,
                  "gen_time", "gen_time_std"]
TABLE_HEADERS = {
    "label": "Model", "ablation": "Ablation", "seed": "Seed", "k": "K", "f": "F",
    "samples": "N", "min_ade": "minADE", "min_fde": "minFDE", "div": "Div", "mll": "MLL",
    "min_mse_s": "minMSE-S", "gen_time": "Time(s)", "gen_time_std": "Time std",
}


@dataclass
class MetricReport:
    """Aggregated metrics of one model on one test split"""
    min_ade: float
    min_fde: float
    div: float
    mll: float
    min_mse_s: float
    k: int
    f: int
    samples: int
    label: str = ""
    ablation: str = ""
    seed: Optional[int] = None
    gen_time: Optional[float] = None
    gen_time_std: Optional[float] = None
    per_action: Dict[str, Dict[str, float]] = field(default_factory=dict)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, k: int, f: int, label: str = "") -> "MetricReport":
        """Aggregate a per-sample metric frame (one row per sample, plus an 'action' column)"""
        means = frame[METRIC_COLUMNS].mean()
        per_action = frame.groupby("action")[METRIC_COLUMNS].mean()
        per_action["samples"] = frame.groupby("action").size()
        return cls(k=k, f=f, samples=len(frame), label=label,
                   per_action={action: row.to_dict() for action, row in per_action.iterrows()},
                   **{column: float(means[column]) for column in METRIC_COLUMNS})

    def to_row(self) -> Dict[str, object]:
        values = asdict(self)
        return {column: values[column] for column in REPORT_COLUMNS}

    def action_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame.from_dict(self.per_action, orient="index")
        frame.index.name = "action"
        return frame


def reports_frame(reports: Sequence[MetricReport]) -> pd.DataFrame:
    return pd.DataFrame([r.to_row() for r in reports], columns=REPORT_COLUMNS)


def write_metric_reports(reports: Sequence[MetricReport], path: str) -> pd.DataFrame:
    """CSV with one row per report; per-action breakdowns go next to it"""
    frame = reports_frame(reports)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False)
    stem, _ = os.path.splitext(path)
    actions = [r.action_frame().assign(label=r.label, seed=r.seed) for r in reports if r.per_action]
    if actions:
        pd.concat(actions).to_csv(f"{stem}_per_action.csv")
    with open(f"{stem}.txt", "w", encoding="utf-8") as f:
        f.write(format_table(frame) + "\n")
    return frame


def read_metric_reports(path: str) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def format_table(frame: pd.DataFrame) -> str:
    """Fixed-width text table of the non-empty report columns"""
    shown = frame.mask(frame.astype(str).eq("")).dropna(axis=1, how="all")
    return shown.rename(columns=TABLE_HEADERS).to_string(index=False, na_rep="-",
                                                         float_format=lambda v: f"{v:.4f}")


def summarize_runs(frame: pd.DataFrame, by: str = "ablation") -> pd.DataFrame:
    """Mean and standard deviation of every metric across seeds"""
    metrics = [c for c in METRIC_COLUMNS + ["gen_time"] if c in frame and frame[c].notna().any()]
    summary = frame.groupby(by, sort=False)[metrics].agg(["mean", "std"])
    summary.columns = [f"{metric}_{stat}" for metric, stat in summary.columns]
    summary["runs"] = frame.groupby(by, sort=False).size()
    return summary.reset_index()


def format_summary(summary: pd.DataFrame, by: str = "ablation") -> str:
    """mean +- std cells, one row per group"""
    metrics = [c[:-5] for c in summary.columns if c.endswith("_mean")]
    frame = pd.DataFrame({by: summary[by]})
    for metric in metrics:
        frame[TABLE_HEADERS.get(metric, metric)] = [
            f"{m:.4f} +- {0.0 if np.isnan(s) else s:.4f}"
            for m, s in zip(summary[f"{metric}_mean"], summary[f"{metric}_std"])]
    frame["runs"] = summary["runs"]
    return format_table(frame)


def write_train_report(epochs: List[Dict[str, float]], checkpoints: Sequence[str],
                       output_dir: str, summary: Optional[Dict[str, object]] = None):
    """train_report.csv (one row per epoch) and train_summary.txt"""
    os.makedirs(output_dir, exist_ok=True)
    pd.DataFrame(epochs).to_csv(os.path.join(output_dir, "train_report.csv"), index=False)
    with open(os.path.join(output_dir, "train_summary.txt"), "w", encoding="utf-8") as f:
        for key, value in (summary or {}).items():
            f.write(f"{key}={value}\n")
        for checkpoint in checkpoints:
            f.write(f"checkpoint={checkpoint}\n")
    logger.info(f"Wrote training report to {output_dir}")
