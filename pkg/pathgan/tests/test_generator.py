import unittest

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from pathgan.exceptions import ContractError, InvalidInputError
from pathgan.generator import GeneratorConfig, GeneratorVariant, PathGenerator
from pathgan.tests.helpers import tiny_model_config

torch.manual_seed(7)


def make_generator(variant=GeneratorVariant.SHARED, path_length=4, **kwargs) -> PathGenerator:
    config = GeneratorConfig.from_model_config(tiny_model_config(path_length), variant, **kwargs)
    return PathGenerator(config)


def lstm_cell(cell: nn.LSTMCell, x, state):
    """LSTMCell written out gate by gate (input, forget, cell, output)"""
    h, c = state
    gates = x @ cell.weight_ih.T + cell.bias_ih + h @ cell.weight_hh.T + cell.bias_hh
    i, f, g, o = gates.chunk(4, dim=1)
    c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
    return torch.sigmoid(o) * torch.tanh(c), c


def attend(attention, query, features):
    scores = (torch.tanh(features @ attention.feature_proj.weight.T
                         + (query @ attention.query_proj.weight.T).unsqueeze(1)) @ attention.score.weight.T)
    weights = torch.softmax(scores.squeeze(-1), dim=1)
    return (weights.unsqueeze(-1) * features).sum(1), weights


class InitStateTests(unittest.TestCase):
    def setUp(self):
        self.generator = make_generator()
        self.features = torch.randn(1, 4, 4)

    def test_initial_position_is_speed(self):
        state = self.generator.init_state([2], [5.0], torch.zeros(1, 4), self.features)
        torch.testing.assert_close(state.position * self.generator.config.position_scale,
                                   torch.tensor([[5.0, 5.0]]))
        torch.testing.assert_close(state.intention, F.one_hot(torch.tensor([2]), 9).float())
        torch.testing.assert_close(state.intention_hidden[0], torch.zeros(1, 8))

    def test_deterministic_and_action_dependent(self):
        noise = torch.zeros(1, 4)
        a = self.generator.init_state([0], [5.0], noise, self.features)
        b = self.generator.init_state([0], [5.0], noise, self.features)
        c = self.generator.init_state([3], [5.0], noise, self.features)
        torch.testing.assert_close(a.path_hidden[0], b.path_hidden[0], rtol=0, atol=0)
        self.assertFalse(torch.equal(a.path_hidden[0], c.path_hidden[0]))

    def test_initial_context_attends_from_the_initial_hidden_state(self):
        state = self.generator.init_state([1], [3.0], torch.randn(1, 4), self.features)
        context, _ = attend(self.generator.att_p, state.path_hidden[0], self.features)
        torch.testing.assert_close(state.context, context)

    def test_invalid_action(self):
        with self.assertRaises(InvalidInputError):
            self.generator.init_state([9], [5.0], torch.zeros(1, 4), self.features)
        with self.assertRaises(InvalidInputError):
            self.generator.init_state([1, 2], [5.0], torch.zeros(1, 4), self.features)


class StepTests(unittest.TestCase):
    def test_intention_step(self):
        generator = make_generator()
        features = torch.randn(3, 4, 4)
        state = generator.init_state([0, 4, 8], [2.0, 6.0, 12.0], torch.randn(3, 4), features)
        logits, new_state = generator.intention_step(state)
        self.assertEqual(tuple(logits.shape), (3, 9))
        torch.testing.assert_close(torch.softmax(logits, 1).sum(1), torch.ones(3), atol=1e-6, rtol=0)

        # Hand recomputation
        g = generator
        e = F.relu(torch.cat([state.intention, state.position, state.path_hidden[0], state.context], 1)
                   @ g.intention_embed.weight.T + g.intention_embed.bias)
        h, _ = lstm_cell(g.lstm_a, e, state.intention_hidden)
        torch.testing.assert_close(logits, h @ g.intention_out.weight.T + g.intention_out.bias)
        torch.testing.assert_close(new_state.intention, logits)

        with torch.no_grad():
            g.intention_out.weight.zero_()
            g.intention_out.bias.zero_()
        logits, _ = generator.intention_step(state)
        torch.testing.assert_close(torch.softmax(logits, 1), torch.full((3, 9), 1 / 9))

    def test_direct_variant_reads_the_context(self):
        generator = make_generator(GeneratorVariant.DIRECT)
        features = torch.randn(2, 4, 4)
        state = generator.init_state([1, 2], [4.0, 9.0], torch.randn(2, 4), features)
        logits, _ = generator.intention_step(state)
        torch.testing.assert_close(logits, generator.intention_mlp(state.context))

    def test_no_li_has_no_intention_step(self):
        generator = make_generator(GeneratorVariant.NO_LI)
        state = generator.init_state([0], [5.0], torch.zeros(1, 4), torch.randn(1, 4, 4))
        with self.assertRaises(ContractError):
            generator.intention_step(state)

    def test_position_step(self):
        generator = make_generator()
        features = torch.randn(2, 4, 4)
        state = generator.init_state([5, 6], [3.0, 8.0], torch.randn(2, 4), features)
        intention = torch.randn(2, 9)
        step = generator.position_step(state, intention, features)
        self.assertEqual(tuple(step.position.shape), (2, 2))
        self.assertTrue(bool(torch.isfinite(step.position).all()))

        g = generator
        e = F.relu(torch.cat([state.position, intention], 1) @ g.position_embed.weight.T + g.position_embed.bias)
        h, c = lstm_cell(g.lstm_p, e, state.path_hidden)
        context, weights = attend(g.att_p, h, features)
        hidden = F.relu(torch.cat([context, h], 1) @ g.output_hidden.weight.T + g.output_hidden.bias)
        torch.testing.assert_close(step.position, hidden @ g.output.weight.T + g.output.bias)
        torch.testing.assert_close(step.weights, weights)
        torch.testing.assert_close(step.state.path_hidden[1], c)
        torch.testing.assert_close(step.state.context, context)

    def test_split_equals_shared_with_copied_attention(self):
        shared = make_generator(GeneratorVariant.SHARED)
        split = make_generator(GeneratorVariant.SPLIT)
        split.load_state_dict(shared.state_dict(), strict=False)
        split.att_a.load_state_dict(split.att_p.state_dict())
        features, noise = torch.randn(2, 4, 4), torch.randn(2, 4)
        a = shared.rollout(features, [1, 7], [4.0, 11.0], noise)
        b = split.rollout(features, [1, 7], [4.0, 11.0], noise)
        torch.testing.assert_close(a.positions, b.positions)
        torch.testing.assert_close(a.logits, b.logits)

    def test_no_li_equals_shared_with_intentions_ablated(self):
        shared = make_generator(GeneratorVariant.SHARED)
        no_li = make_generator(GeneratorVariant.NO_LI)
        no_li.load_state_dict(shared.state_dict(), strict=False)
        features, noise = torch.randn(2, 4, 4), torch.randn(2, 4)
        a = shared.rollout(features, [0, 3], [5.0, 9.0], noise, ablate_intentions=True)
        b = no_li.rollout(features, [0, 3], [5.0, 9.0], noise)
        torch.testing.assert_close(a.positions, b.positions)
        torch.testing.assert_close(a.logits, F.one_hot(torch.tensor([0, 3]), 9).float()
                                   .unsqueeze(1).expand(2, 4, 9))


class GenerateTests(unittest.TestCase):
    def test_shapes_and_determinism(self):
        generator = make_generator(path_length=20)
        features = torch.randn(4, 4)
        paths = generator.generate(features, 2, 6.0, k=20, rng=3)
        self.assertEqual(len(paths), 20)
        for path in paths:
            self.assertEqual(path.positions.shape, (20, 2))
            self.assertEqual(path.logits.shape, (20, 9))
            self.assertEqual(path.attention.shape, (20, 4))
        once = generator.generate(features, 2, 6.0, k=1, rng=11)[0]
        again = generator.generate(features, 2, 6.0, k=1, rng=11)[0]
        self.assertTrue((once.positions == again.positions).all())

    def test_noise_spreads_paths(self):
        generator = make_generator(path_length=20)
        paths = generator.generate(torch.randn(4, 4), 0, 8.0, k=20, rng=0)
        spread = np.stack([p.positions for p in paths]).var(axis=0)
        self.assertGreater(float(spread.sum()), 0.0)

    def test_without_noise_paths_coincide(self):
        generator = make_generator(path_length=6, use_noise=False)
        paths = generator.generate(torch.randn(4, 4), 0, 8.0, k=3, rng=0)
        np.testing.assert_allclose(paths[0].positions, paths[2].positions, atol=1e-6)

    def test_paths_are_continuous_in_noise(self):
        generator = make_generator(path_length=10).double()
        features = torch.randn(1, 4, 4, dtype=torch.float64)
        noise = torch.randn(1, 4, dtype=torch.float64)
        direction = torch.randn(1, 4, dtype=torch.float64)
        base = generator(features, [4], [7.0], noise=noise).positions
        changes = []
        for eps in [1e-2, 1e-4, 1e-6]:
            moved = generator(features, [4], [7.0], noise=noise + eps * direction).positions
            changes.append(float((moved - base).abs().max()))
        self.assertLess(changes[2], 1e-3)
        self.assertLess(changes[2], changes[1])
        self.assertLess(changes[1], changes[0])

    def test_forward_shapes_and_errors(self):
        generator = make_generator()
        out = generator(torch.randn(2, 4, 4), [0, 1], [3.0, 4.0], k=3)
        self.assertEqual(tuple(out.positions.shape), (2, 3, 4, 2))
        self.assertEqual(tuple(out.logits.shape), (2, 3, 4, 9))
        self.assertEqual(tuple(out.attention.shape), (2, 3, 4, 4))
        with self.assertRaises(InvalidInputError):
            generator(torch.randn(2, 4, 4), [0, 1], [3.0, 4.0], k=0)
        with self.assertRaises(InvalidInputError):
            generator(torch.randn(2, 4, 4), [0, 1], [3.0, 4.0], k=2, noise=torch.randn(2, 4))

    def test_config_validation(self):
        with self.assertRaises(ValueError):
            GeneratorConfig(variant="P9")
        with self.assertRaises(InvalidInputError):
            GeneratorConfig(hidden_dim=0)


if __name__ == "__main__":
    unittest.main()
