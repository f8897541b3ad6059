import os
import shutil
import tempfile
import unittest
from collections import Counter
from dataclasses import replace

import numpy as np
import numpy.testing as npt
import torch

from pathgan.dataset import (IMAGE_DIR, INDEX_FILE, DatasetRecord, PathDataset, build_dataset,
                             dataset_digest, load_dataset, read_index, split_quotas, verify_dataset)
from pathgan.exceptions import ConfigError, InvalidInputError, PathGANError
from pathgan.geometry import Path, label_positions, resample_unit_arc
from pathgan.scenes import ACTION_NAMES, Action, SceneSpec, generate_scene
from pathgan.tests.helpers import tiny_dataset_config


class DatasetBuildTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        cls.config = tiny_dataset_config()
        cls.root = os.path.join(cls.tmp, "data")
        cls.digest = build_dataset(cls.config, cls.root)
        cls.dataset = load_dataset(cls.root)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def test_layout(self):
        self.assertTrue(os.path.isfile(os.path.join(self.root, INDEX_FILE)))
        header, records = read_index(os.path.join(self.root, INDEX_FILE))
        self.assertEqual(header["format"], "pathgan-dataset-v1")
        self.assertEqual(int(header["n_samples"]), len(records))
        for record in records:
            blob = os.path.join(self.root, IMAGE_DIR, record.image)
            self.assertEqual(os.path.getsize(blob), 16 * 16 * 3)

    def test_every_sample_is_valid(self):
        self.assertEqual(verify_dataset(self.dataset), len(self.dataset))
        self.assertGreater(len(self.dataset), 0)
        for record in self.dataset.records:
            with_origin = np.vstack([np.zeros((1, 2)), record.path])
            npt.assert_allclose(np.linalg.norm(np.diff(with_origin, axis=0), axis=1), 1.0, atol=1e-6)

    def test_splits_are_disjoint_and_balanced(self):
        seeds = {split: {r.seed for r in self.dataset.split(split)} for split in ("train", "val", "test")}
        self.assertFalse(seeds["train"] & seeds["test"])
        self.assertFalse(seeds["train"] & seeds["val"])
        self.assertFalse(seeds["val"] & seeds["test"])
        quotas = split_quotas(self.config)
        for split in ("train", "val", "test"):
            counts = Counter(r.gi for r in self.dataset.split(split))
            for action, quota in enumerate(quotas[split]):
                self.assertLessEqual(counts[action], quota)

    def test_rebuild_is_byte_identical(self):
        other = os.path.join(self.tmp, "again")
        self.assertEqual(build_dataset(self.config, other), self.digest)
        self.assertEqual(dataset_digest(other), self.dataset.digest())
        with open(os.path.join(self.root, INDEX_FILE), "rb") as a, open(os.path.join(other, INDEX_FILE), "rb") as b:
            self.assertEqual(a.read(), b.read())

    def test_worker_pool_matches_sequential(self):
        other = os.path.join(self.tmp, "pooled")
        self.assertEqual(build_dataset(replace(self.config, workers=2), other), self.digest)

    def test_record_round_trip(self):
        record = self.dataset.records[0]
        again = DatasetRecord.from_row(record.to_row())
        npt.assert_array_equal(again.path, record.path)
        npt.assert_array_equal(again.li, record.li)
        self.assertEqual(again.speed, record.speed)

    def test_images(self):
        image = self.dataset.image(self.dataset.records[0])
        self.assertEqual(image.shape, (16, 16, 3))
        self.assertEqual(image.dtype, np.float32)
        self.assertTrue(0.0 <= image.min() and image.max() <= 1.0)

    def test_action_counts(self):
        counts = self.dataset.action_counts()
        self.assertTrue(set(counts.columns) <= set(ACTION_NAMES))
        for split in counts.index:
            self.assertEqual(int(counts.loc[split].sum()), len(self.dataset.split(split)))

    def test_unsatisfiable_balance(self):
        strict = replace(self.config, n_samples=90, balance_tolerance=0.0, max_attempts_factor=1)
        target = os.path.join(self.tmp, "strict")
        with self.assertRaises(ConfigError):
            build_dataset(strict, target)
        self.assertFalse(os.path.exists(target))

    def test_corrupt_dataset_is_rejected(self):
        copy = os.path.join(self.tmp, "corrupt")
        shutil.copytree(self.root, copy)
        record = load_dataset(copy).records[0]
        with open(os.path.join(copy, IMAGE_DIR, record.image), "wb") as f:
            f.write(b"\x00" * 10)
        with self.assertRaises(InvalidInputError):
            load_dataset(copy).image(record)
        with self.assertRaises(PathGANError):
            load_dataset(os.path.join(self.tmp, "missing"))


class ThousandPathTests(unittest.TestCase):
    """Unit spacing and source-trajectory labels over a thousand dataset paths"""

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        cls.config = replace(tiny_dataset_config(seed=7, n_samples=1080), balance_tolerance=0.5, workers=2)
        root = os.path.join(cls.tmp, "data")
        build_dataset(cls.config, root)
        cls.dataset = load_dataset(root)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def test_unit_spacing(self):
        self.assertGreaterEqual(len(self.dataset), 1000)
        errors = [Path(record.path).spacing_error() for record in self.dataset.records]
        self.assertLess(max(errors), 1e-6)

    def test_labels_come_from_the_source_trajectory(self):
        scene = self.config.scene
        for record in self.dataset.records:
            spec = SceneSpec.random(record.seed, Action(record.maneuver), scene)
            source = generate_scene(spec, scene).ego_trajectory()
            path = resample_unit_arc(source.positions, scene.path_length)
            npt.assert_array_equal(path.positions, record.path)
            npt.assert_array_equal(label_positions(path, source), record.li)


class PathDatasetTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        root = os.path.join(cls.tmp, "data")
        build_dataset(tiny_dataset_config(seed=4), root)
        cls.dataset = load_dataset(root)

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp, ignore_errors=True)

    def test_item(self):
        view = PathDataset(self.dataset, "train", f=5)
        item = view[0]
        self.assertEqual(tuple(item["image"].shape), (3, 16, 16))
        self.assertEqual(tuple(item["path"].shape), (20, 2))
        self.assertEqual(tuple(item["li"].shape), (20,))
        self.assertEqual(item["gi"].dtype, torch.long)
        self.assertIn(int(item["gi"]), view.records[0].li[:5].tolist())

    def test_test_mode_uses_the_majority(self):
        view = PathDataset(self.dataset, "test", f=5)
        self.assertEqual(view.mode, "test")
        for i, record in enumerate(view.records):
            self.assertEqual(int(view[i]["gi"]), record.gi)

    def test_f_changes_without_rebuild(self):
        view = PathDataset(self.dataset, "train", f=1, mode="test")
        for i, record in enumerate(view.records):
            self.assertEqual(int(view[i]["gi"]), record.li[0])
        with self.assertRaises(InvalidInputError):
            PathDataset(self.dataset, "train", f=21)
        with self.assertRaises(InvalidInputError):
            PathDataset(self.dataset, "holdout", f=5)

    def test_limit(self):
        self.assertEqual(len(PathDataset(self.dataset, "train", f=5, limit=3)), 3)


if __name__ == "__main__":
    unittest.main()
