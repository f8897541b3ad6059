import unittest

import torch
from torch import nn

from pathgan.backbone import FeatureExtractor, SpatialAttention, extract_features, spatial_attention
from pathgan.config import ModelConfig
from pathgan.exceptions import InvalidInputError

torch.manual_seed(3)


class FeatureExtractorTests(unittest.TestCase):
    def test_default_shape(self):
        fen = FeatureExtractor(ModelConfig())
        features = fen(torch.rand(2, 3, 64, 64))
        self.assertEqual(tuple(features.shape), (2, 64, 32))
        self.assertEqual(fen.num_cells, 64)

    def test_shape_ignores_content(self):
        fen = FeatureExtractor(ModelConfig(image_height=32, image_width=48))
        for image in [torch.zeros(1, 3, 32, 48), torch.rand(1, 3, 32, 48), torch.ones(1, 3, 32, 48)]:
            self.assertEqual(tuple(fen(image).shape), (1, 24, 32))

    def test_zero_image_with_zero_biases(self):
        fen = FeatureExtractor(ModelConfig(image_height=16, image_width=16))
        for module in fen.modules():
            if isinstance(module, (nn.Conv2d, nn.Linear)):
                nn.init.zeros_(module.bias)
        features = fen(torch.zeros(1, 3, 16, 16))
        torch.testing.assert_close(features, torch.zeros_like(features))

    def test_obstacle_shift_moves_the_peak_cell(self):
        config = ModelConfig(image_height=32, image_width=32, conv_channels=(1, 1, 1, 1), feature_dim=1)
        fen = FeatureExtractor(config)
        with torch.no_grad():
            for module in fen.modules():
                if isinstance(module, nn.Conv2d):
                    module.weight.zero_()
                    module.weight[0, 0, 1, 1] = 1.0
                    module.bias.zero_()
            fen.reduce.weight.fill_(1.0)
            fen.reduce.bias.zero_()

        def peak(row, col):
            image = torch.zeros(1, 3, 32, 32)
            image[0, 0, row:row + 8, col:col + 8] = 1.0
            return int(fen(image)[0, :, 0].argmax())

        # 4x4 grid of 8-pixel cells
        self.assertEqual(peak(8, 8), 1 * 4 + 1)
        self.assertEqual(peak(8, 16), 1 * 4 + 2)
        self.assertEqual(peak(16, 16), 2 * 4 + 2)

    def test_bad_shapes(self):
        fen = FeatureExtractor(ModelConfig(image_height=16, image_width=16))
        with self.assertRaises(InvalidInputError):
            fen(torch.rand(1, 3, 32, 32))
        with self.assertRaises(InvalidInputError):
            fen(torch.rand(3, 16, 16))

    def test_extract_features_accepts_hwc(self):
        fen = FeatureExtractor(ModelConfig(image_height=16, image_width=24))
        image = torch.rand(16, 24, 3)
        torch.testing.assert_close(extract_features(image.numpy(), fen),
                                   fen(image.permute(2, 0, 1).unsqueeze(0))[0])


class SpatialAttentionTests(unittest.TestCase):
    def test_simplex(self):
        attention = SpatialAttention(6, 5, 4)
        for _ in range(20):
            features = torch.randn(3, 7, 5)
            result = attention(torch.randn(3, 6), features)
            self.assertTrue(bool((result.weights >= 0).all()))
            torch.testing.assert_close(result.weights.sum(1), torch.ones(3), atol=1e-6, rtol=0)
            torch.testing.assert_close(result.context, torch.einsum("bm,bmd->bd", result.weights, features))

    def test_single_cell(self):
        attention = SpatialAttention(4, 3, 2)
        features = torch.randn(1, 1, 3)
        result = attention(torch.randn(1, 4), features)
        torch.testing.assert_close(result.weights, torch.ones(1, 1))
        torch.testing.assert_close(result.context, features[:, 0])

    def test_identical_cells(self):
        attention = SpatialAttention(4, 3, 2)
        v = torch.randn(3)
        result = spatial_attention(torch.randn(4), v.expand(5, 3), attention)
        torch.testing.assert_close(result.context, v)
        self.assertEqual(tuple(result.weights.shape), (5,))

    def test_hand_computed(self):
        attention = SpatialAttention(2, 2, 2)
        with torch.no_grad():
            attention.feature_proj.weight.copy_(torch.tensor([[0.5, 0.0], [0.0, 0.5]]))
            attention.query_proj.weight.copy_(torch.tensor([[0.1, 0.2], [0.3, 0.4]]))
            attention.score.weight.copy_(torch.tensor([[1.0, -1.0]]))
        query = torch.tensor([1.0, 1.0])
        features = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        # W_h q = (0.3, 0.7); tanh((0.8, 0.7)) and tanh((0.3, 1.2))
        s1 = torch.tanh(torch.tensor(0.8)) - torch.tanh(torch.tensor(0.7))
        s2 = torch.tanh(torch.tensor(0.3)) - torch.tanh(torch.tensor(1.2))
        weights = torch.softmax(torch.stack([s1, s2]), 0)
        result = spatial_attention(query, features, attention)
        torch.testing.assert_close(result.weights, weights)
        torch.testing.assert_close(result.context, weights[0] * features[0] + weights[1] * features[1])

    def test_gradients(self):
        attention = SpatialAttention(3, 2, 4).double()
        query = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
        features = torch.randn(2, 4, 2, dtype=torch.float64, requires_grad=True)
        self.assertTrue(torch.autograd.gradcheck(lambda q, v: attention(q, v).context, (query, features)))
        params = list(attention.parameters())

        def context_of(*weights):
            return torch.func.functional_call(
                attention, dict(zip([n for n, _ in attention.named_parameters()], weights)),
                (query.detach(), features.detach())).context

        inputs = tuple(p.detach().clone().requires_grad_(True) for p in params)
        self.assertTrue(torch.autograd.gradcheck(context_of, inputs))

    def test_dimension_mismatch(self):
        attention = SpatialAttention(4, 3, 2)
        with self.assertRaises(InvalidInputError):
            attention(torch.randn(1, 5), torch.randn(1, 2, 3))
        with self.assertRaises(InvalidInputError):
            attention(torch.randn(1, 4), torch.randn(1, 2, 4))
        with self.assertRaises(InvalidInputError):
            attention(torch.randn(2, 4), torch.randn(1, 2, 3))


if __name__ == "__main__":
    unittest.main()
