import math
import os
import shutil
import tempfile
import unittest

import pandas as pd

from pathgan.reports import (REPORT_COLUMNS, MetricReport, format_summary, format_table,
                             read_metric_reports, reports_frame, summarize_runs,
                             write_metric_reports, write_train_report)


def make_report(ablation: str, seed: int, offset: float = 0.0) -> MetricReport:
    frame = pd.DataFrame({
        "action": ["Go", "Go", "TurnLeft"],
        "min_ade": [1.0 + offset, 2.0 + offset, 3.0 + offset],
        "min_fde": [2.0, 4.0, 6.0],
        "div": [0.5, 0.5, 0.5],
        "mll": [-1.0, -2.0, -3.0],
        "min_mse_s": [0.01, 0.02, 0.03],
    })
    report = MetricReport.from_frame(frame, k=20, f=5, label=f"{ablation}-seed{seed}")
    report.ablation = ablation
    report.seed = seed
    return report


class MetricReportTests(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def test_aggregation(self):
        report = make_report("P4", 0)
        self.assertEqual(report.samples, 3)
        self.assertAlmostEqual(report.min_ade, 2.0)
        self.assertAlmostEqual(report.mll, -2.0)
        self.assertEqual(set(report.per_action), {"Go", "TurnLeft"})
        self.assertAlmostEqual(report.per_action["Go"]["min_ade"], 1.5)
        self.assertEqual(int(report.per_action["TurnLeft"]["samples"]), 1)
        self.assertEqual(list(report.to_row()), REPORT_COLUMNS)

    def test_csv_round_trip(self):
        reports = [make_report("P2", 0), make_report("P4", 1, offset=0.123456789)]
        path = os.path.join(self.tmp, "metrics.csv")
        written = write_metric_reports(reports, path)
        read = read_metric_reports(path)
        self.assertEqual(list(read.columns), REPORT_COLUMNS)
        self.assertEqual(read["min_ade"].tolist(), written["min_ade"].tolist())
        self.assertEqual(read["ablation"].tolist(), ["P2", "P4"])
        self.assertTrue(os.path.isfile(os.path.join(self.tmp, "metrics_per_action.csv")))
        with open(os.path.join(self.tmp, "metrics.txt"), encoding="utf-8") as f:
            text = f.read()
        self.assertIn("minADE", text)
        self.assertIn("2.1235", text)

    def test_table_hides_empty_columns(self):
        table = format_table(reports_frame([make_report("P4", 0)]))
        header = table.splitlines()[0]
        self.assertIn("minMSE-S", header)
        self.assertNotIn("Time(s)", header)
        self.assertEqual(len(table.splitlines()), 2)
        self.assertIn("2.0000", table.splitlines()[1])
        self.assertNotIn("None", table)

    def test_summary_across_seeds(self):
        frame = reports_frame([make_report("P2", 0), make_report("P2", 1, offset=1.0), make_report("P4", 0)])
        summary = summarize_runs(frame)
        self.assertEqual(summary["ablation"].tolist(), ["P2", "P4"])
        self.assertEqual(summary["runs"].tolist(), [2, 1])
        self.assertAlmostEqual(summary["min_ade_mean"][0], 2.5)
        self.assertAlmostEqual(summary["min_ade_std"][0], math.sqrt(0.5))
        self.assertTrue(math.isnan(summary["min_ade_std"][1]))
        text = format_summary(summary)
        self.assertIn("2.5000 +- 0.7071", text)
        self.assertIn("2.0000 +- 0.0000", text)

    def test_train_report(self):
        out = os.path.join(self.tmp, "train")
        write_train_report([{"epoch": 1, "loss_g": 3.0}, {"epoch": 2, "loss_g": 2.0}], ["model.npz"], out,
                           {"ablation": "P4"})
        frame = pd.read_csv(os.path.join(out, "train_report.csv"))
        self.assertEqual(frame["loss_g"].tolist(), [3.0, 2.0])
        with open(os.path.join(out, "train_summary.txt"), encoding="utf-8") as f:
            self.assertEqual(f.read().splitlines(), ["ablation=P4", "checkpoint=model.npz"])


if __name__ == "__main__":
    unittest.main()
