import numpy as np
import pywt
import torch
from django.test import SimpleTestCase

from amif.exceptions import DimensionError
from amif.wavelet import Subbands, dwt2, idwt2, dwt2_packed, idwt2_packed, low_band


class HaarTransformTests(SimpleTestCase):
    def setUp(self):
        self.generator = torch.Generator().manual_seed(7)

    def randn(self, *shape):
        return torch.randn(*shape, generator=self.generator, dtype=torch.float64)

    def test_bands_match_pywavelets_haar(self):
        x = self.randn(1, 1, 32, 48)

        bands = dwt2(x)
        c_a, (c_h, c_v, c_d) = pywt.dwt2(x[0, 0].numpy(), 'haar')

        np.testing.assert_allclose(bands.ll[0, 0].numpy(), c_a, atol=1e-6)
        np.testing.assert_allclose(bands.lh[0, 0].numpy(), c_v, atol=1e-6)
        np.testing.assert_allclose(bands.hl[0, 0].numpy(), c_h, atol=1e-6)
        np.testing.assert_allclose(bands.hh[0, 0].numpy(), c_d, atol=1e-6)

    def test_reconstruction_is_exact_on_random_images(self):
        for _ in range(10):
            x = self.randn(10, 1, 256, 256)

            restored = idwt2(dwt2(x))

            self.assertLessEqual((restored - x).abs().max().item(), 1e-10)

    def test_transform_preserves_energy(self):
        x = self.randn(2, 3, 64, 64)

        energy = sum((band ** 2).sum() for band in dwt2(x).bands())

        self.assertAlmostEqual(energy.item(), (x ** 2).sum().item(), places=8)

    def test_constant_image_has_only_low_band(self):
        x = torch.full((1, 1, 8, 8), 0.3, dtype=torch.float64)

        bands = dwt2(x)

        self.assertTrue(torch.allclose(bands.ll, torch.full_like(bands.ll, 0.6)))
        for band in (bands.lh, bands.hl, bands.hh):
            self.assertEqual(band.abs().max().item(), 0.0)

    def test_odd_size_names_the_axis(self):
        with self.assertRaisesMessage(DimensionError, 'width'):
            dwt2(torch.zeros(1, 1, 8, 7))
        with self.assertRaisesMessage(DimensionError, 'height'):
            dwt2(torch.zeros(1, 1, 9, 8))

    def test_packed_layout_interleaves_bands_per_channel(self):
        x = self.randn(2, 3, 16, 16)

        bands = dwt2(x)
        packed = dwt2_packed(x)

        self.assertEqual(tuple(packed.shape), (2, 12, 8, 8))
        for c in range(3):
            for k, band in enumerate(bands.bands()):
                self.assertTrue(torch.equal(packed[:, 4 * c + k], band[:, c]))
        self.assertTrue(torch.equal(low_band(packed), bands.ll))
        self.assertLessEqual((idwt2_packed(packed) - x).abs().max().item(), 1e-12)

    def test_mismatched_bands_are_rejected(self):
        bands = dwt2(self.randn(1, 1, 8, 8))
        broken = Subbands(bands.ll, bands.lh, bands.hl, bands.hh[..., :2])

        with self.assertRaises(DimensionError):
            idwt2(broken)

    def test_unpack_rejects_non_multiple_of_four_channels(self):
        with self.assertRaises(DimensionError):
            Subbands.unpack(torch.zeros(1, 6, 4, 4))
