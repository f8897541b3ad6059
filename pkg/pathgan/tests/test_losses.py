import math
import unittest

import numpy as np
import torch

from pathgan.exceptions import InvalidInputError, TrainingAbortedError
from pathgan.losses import (LossBundle, LossWeights, adversarial_loss, adversarial_losses,
                            classification_losses, total_objectives, variety_loss)

torch.manual_seed(5)


class VarietyLossTests(unittest.TestCase):
    def test_zero_when_ground_truth_is_generated(self):
        gt = torch.randn(20, 2)
        generated = torch.stack([torch.randn(20, 2), gt, torch.randn(20, 2)])
        self.assertEqual(float(variety_loss(gt, generated)), 0.0)
        self.assertEqual(float(variety_loss(gt, gt.unsqueeze(0))), 0.0)

    def test_brute_force(self):
        for _ in range(20):
            gt = torch.randn(6, 2, dtype=torch.float64)
            generated = torch.randn(5, 6, 2, dtype=torch.float64)
            expected = min(float(((g - gt) ** 2).sum(1).mean()) for g in generated)
            self.assertAlmostEqual(float(variety_loss(gt, generated)), expected, places=12)

    def test_monotone_when_paths_are_appended(self):
        gt = torch.randn(8, 2)
        generated = torch.randn(30, 8, 2)
        values = [float(variety_loss(gt, generated[:k])) for k in range(1, 31)]
        self.assertTrue(all(b <= a for a, b in zip(values, values[1:])))

    def test_batched_is_the_batch_mean(self):
        gt = torch.randn(3, 5, 2)
        generated = torch.randn(3, 4, 5, 2)
        expected = torch.stack([variety_loss(gt[b], generated[b]) for b in range(3)]).mean()
        torch.testing.assert_close(variety_loss(gt, generated), expected)

    def test_errors(self):
        with self.assertRaises(InvalidInputError):
            variety_loss(torch.zeros(4, 2), torch.zeros(0, 4, 2))
        with self.assertRaises(InvalidInputError):
            variety_loss(torch.zeros(4, 2), torch.zeros(2, 5, 2))


class AdversarialLossTests(unittest.TestCase):
    def test_symmetric_scores(self):
        half = torch.full((4,), 0.5)
        loss = adversarial_loss(half, half, "discriminator")
        self.assertAlmostEqual(float(loss), 2 * math.log(2), places=6)
        self.assertAlmostEqual(float(adversarial_loss(None, half, "generator")), math.log(2), places=6)
        self.assertAlmostEqual(float(adversarial_loss(None, half, "generator", saturating=True)),
                               -math.log(2), places=6)

    def test_saturated_scores_stay_finite(self):
        real, fake = torch.zeros(3), torch.ones(3)
        self.assertTrue(math.isfinite(float(adversarial_loss(real, fake, "discriminator"))))
        self.assertTrue(math.isfinite(float(adversarial_loss(None, torch.zeros(3), "generator"))))

    def test_streams(self):
        real, fake = torch.rand(5), torch.rand(5)
        path, sequence = adversarial_losses((real, None), (fake, None), "discriminator")
        torch.testing.assert_close(path, adversarial_loss(real, fake, "discriminator"))
        self.assertEqual(float(sequence), 0.0)

    def test_errors(self):
        with self.assertRaises(InvalidInputError):
            adversarial_loss(torch.rand(2), torch.tensor([0.5, 1.5]), "discriminator")
        with self.assertRaises(InvalidInputError):
            adversarial_loss(None, torch.rand(2), "discriminator")
        with self.assertRaises(InvalidInputError):
            adversarial_loss(None, torch.rand(2), "critic")


class ClassificationLossTests(unittest.TestCase):
    def test_uniform_logits(self):
        cls1, cls2 = classification_losses(torch.zeros(4, 9, dtype=torch.float64), torch.tensor([0, 3, 5, 8]),
                                           torch.zeros(4, 6, 9, dtype=torch.float64),
                                           torch.randint(0, 9, (4, 6)))
        self.assertAlmostEqual(float(cls1), math.log(9), delta=1e-9)
        self.assertAlmostEqual(float(cls2), math.log(9), delta=1e-9)

    def test_first_step_is_not_supervised(self):
        logits = torch.randn(2, 4, 9)
        targets = torch.randint(0, 9, (2, 4))
        _, reference = classification_losses(torch.zeros(2, 9), [0, 0], logits, targets)
        changed = logits.clone()
        changed[:, 0] = torch.randn(2, 9) * 10
        other_targets = targets.clone()
        other_targets[:, 0] = (targets[:, 0] + 1) % 9
        _, cls2 = classification_losses(torch.zeros(2, 9), [0, 0], changed, other_targets)
        torch.testing.assert_close(cls2, reference)

    def test_k_samples_share_targets(self):
        logits = torch.randn(2, 3, 4, 9)
        targets = torch.randint(0, 9, (2, 4))
        _, cls2 = classification_losses(torch.zeros(2, 9), [1, 2], logits, targets)
        per_sample = [classification_losses(torch.zeros(2, 9), [1, 2], logits[:, k], targets)[1] for k in range(3)]
        torch.testing.assert_close(cls2, torch.stack(per_sample).mean())

    def test_one_hot_logits(self):
        logits = torch.full((1, 9), -1e4)
        logits[0, 6] = 1e4
        cls1, cls2 = classification_losses(logits, [6])
        self.assertAlmostEqual(float(cls1), 0.0, places=6)
        self.assertEqual(float(cls2), 0.0)

    def test_bad_labels(self):
        with self.assertRaises(InvalidInputError):
            classification_losses(torch.zeros(1, 9), [9])
        with self.assertRaises(InvalidInputError):
            classification_losses(torch.zeros(1, 9), [0], torch.zeros(1, 3, 9), torch.full((1, 3), -1))
        with self.assertRaises(InvalidInputError):
            classification_losses(torch.zeros(1, 9), [0], torch.zeros(1, 1, 9), torch.zeros(1, 1))


class TotalObjectiveTests(unittest.TestCase):
    def test_all_ones(self):
        bundle = LossBundle(variety=1.0, adv1=1.0, adv2=1.0, cls1=1.0, cls2=1.0)
        generator, discriminator = total_objectives(bundle)
        self.assertAlmostEqual(generator, 102.015, places=9)
        self.assertAlmostEqual(discriminator, -1.0, places=12)

    def test_zero_weights(self):
        bundle = LossBundle(variety=3.0, adv1=0.7, adv2=2.0, cls1=1.1, cls2=4.0)
        generator, discriminator = total_objectives(bundle, LossWeights(0.0, 0.0, 0.0, 0.0))
        self.assertAlmostEqual(generator, 1.8, places=12)
        self.assertAlmostEqual(discriminator, 0.4, places=12)

    def test_tensor_terms_keep_gradients(self):
        variety = torch.tensor(2.0, requires_grad=True)
        generator, _ = total_objectives(LossBundle(variety=variety))
        generator.backward()
        self.assertEqual(float(variety.grad), 100.0)

    def test_non_finite_term_aborts(self):
        with self.assertRaises(TrainingAbortedError) as caught:
            total_objectives(LossBundle(variety=float("nan"), cls1=torch.tensor(np.inf)))
        self.assertIn("variety", caught.exception.diagnostics)

    def test_negative_weights(self):
        with self.assertRaises(InvalidInputError):
            LossWeights(lambda2=-1.0)

    def test_as_dict(self):
        values = LossBundle(variety=torch.tensor(0.5), cls2=2.0).as_dict("g_")
        self.assertEqual(values["g_variety"], 0.5)
        self.assertEqual(values["g_cls2"], 2.0)
        self.assertEqual(len(values), 7)

    def test_as_dict_of_graph_tensors(self):
        weight = torch.tensor(2.0, requires_grad=True)
        values = LossBundle(variety=weight * 3.0, adv1=weight.log()).as_dict()
        self.assertEqual(values["variety"], 6.0)
        self.assertAlmostEqual(values["adv1"], math.log(2.0), places=6)
        self.assertIs(type(values["variety"]), float)


if __name__ == "__main__":
    unittest.main()
