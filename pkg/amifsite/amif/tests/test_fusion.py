import torch
from django.test import SimpleTestCase

from amif.backbone import DecomposedFeatures
from amif.exceptions import ConfigurationError
from amif.fusion import DenseBlock, FusionModule

from .helpers import FD_TOLERANCE, input_gradient_error, parameter_gradient_error


class DenseBlockTests(SimpleTestCase):
    def test_output_has_requested_channels(self):
        block = DenseBlock(6, 5, growth=4, layers=3)

        self.assertEqual(tuple(block(torch.randn(2, 6, 8, 8)).shape), (2, 5, 8, 8))

    def test_non_positive_sizes_are_rejected(self):
        for kwargs in ({'growth': 0}, {'layers': 0}):
            with self.subTest(**kwargs):
                with self.assertRaises(ConfigurationError):
                    DenseBlock(4, 4, **kwargs)

    def test_gradients_match_finite_differences(self):
        torch.manual_seed(1)
        block = DenseBlock(3, 2, growth=4, layers=2).double()
        x = torch.randn(1, 3, 5, 5, dtype=torch.float64)

        self.assertLess(input_gradient_error(lambda t: (block(t) ** 2).sum(), [x]), FD_TOLERANCE)
        self.assertLess(parameter_gradient_error(block, lambda: (block(x) ** 2).sum()), FD_TOLERANCE)


class FusionModuleTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)
        self.features = DecomposedFeatures(*(torch.randn(2, 4, 8, 8) for _ in range(4)))

    def test_output_matches_feature_shape(self):
        fusion = FusionModule(4, growth=4, layers=2)

        self.assertEqual(tuple(fusion(self.features).shape), (2, 4, 8, 8))

    def test_zeroed_branches_reduce_to_base_average(self):
        fusion = FusionModule(4, growth=4, layers=2)
        fusion.mu.zero_()
        fusion.varphi.zero_()

        out = fusion(self.features)

        expected = (self.features.base_a + self.features.base_b) / 2
        self.assertTrue(torch.allclose(out, expected))
