import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy import ndimage

from amif.datasets import (
    DatasetSpec, ImagePair, RotationParams, load_image, save_image, scan_pairs, load_pairs,
    rotate, augment, make_synthetic_fixture, make_watermark_label, load_label,
)
from amif.exceptions import ConfigurationError, InputValidationError


class SyntheticFixtureTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.spec = make_synthetic_fixture(self.root / 'data', 3, size=32, seed=11)

    def tearDown(self):
        self.tmp.cleanup()

    def test_fixture_layout(self):
        self.assertEqual(len(list((self.root / 'data' / 'modal_a').glob('*.png'))), 9)
        self.assertEqual(len(list((self.root / 'data' / 'modal_b').glob('*.png'))), 9)
        self.assertEqual(self.spec.splits['val'], ['val_0000', 'val_0001', 'val_0002'])
        self.assertTrue(self.spec.label_path.exists())

    def test_fixture_is_byte_identical_for_a_seed(self):
        again = make_synthetic_fixture(self.root / 'again', 3, size=32, seed=11)

        for path in sorted((self.root / 'data').rglob('*.png')):
            twin = again.root / path.relative_to(self.root / 'data')
            self.assertEqual(path.read_bytes(), twin.read_bytes(), path.name)

    def test_pairs_load_in_unit_range(self):
        pairs = load_pairs(DatasetSpec.from_root(self.root / 'data', 32), 'train')

        self.assertEqual([p.pair_id for p in pairs], ['train_0000', 'train_0001', 'train_0002'])
        for pair in pairs:
            self.assertEqual(pair.a.shape, (32, 32))
            self.assertEqual(pair.a.dtype, np.float32)
            self.assertTrue(0 <= pair.a.min() and pair.b.max() <= 1)
            self.assertIsNone(pair.chroma)

    def test_seeded_order_is_reproducible(self):
        spec = DatasetSpec.from_root(self.root / 'data', 32)

        first = [p.pair_id for p in load_pairs(spec, 'test', seed=5)]
        second = [p.pair_id for p in load_pairs(spec, 'test', seed=5)]

        self.assertEqual(first, second)
        self.assertEqual(sorted(first), ['test_0000', 'test_0001', 'test_0002'])

    def test_modalities_are_registered(self):
        pair = load_pairs(self.spec, 'train')[0]

        centre_a = ndimage.center_of_mass(pair.a > 0.05)
        centre_b = ndimage.center_of_mass(pair.b > 0.05)

        np.testing.assert_allclose(centre_a, centre_b, atol=1.0)

    def test_fixture_label_round_trips(self):
        label = load_label(self.spec.label_path, 32)

        np.testing.assert_array_equal(label, make_watermark_label(32))


class PairingTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        make_synthetic_fixture(self.root, 2, size=16, seed=0)

    def tearDown(self):
        self.tmp.cleanup()

    def test_unpaired_file_is_skipped_and_reported(self):
        (self.root / 'modal_b' / 'train_0001.png').unlink()
        spec = DatasetSpec.from_root(self.root, 16)

        paired, skipped = scan_pairs(spec, 'train')

        self.assertEqual(paired, ['train_0000'])
        self.assertEqual(len(skipped), 1)
        self.assertIn('train_0001', skipped[0])
        self.assertEqual(len(load_pairs(spec, 'train')), 1)

    def test_empty_split_is_a_configuration_error(self):
        for name in ('test_0000', 'test_0001'):
            (self.root / 'modal_a' / f'{name}.png').unlink()

        with self.assertRaisesMessage(ConfigurationError, "'test'"):
            load_pairs(DatasetSpec.from_root(self.root, 16), 'test')

    def test_overlapping_splits_are_rejected(self):
        with self.assertRaises(ConfigurationError):
            DatasetSpec(self.root, splits={'train': ['x'], 'test': ['x']})

    def test_missing_root_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            DatasetSpec.from_root(self.root / 'absent')


class ImageIOTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_grey_image_round_trip(self):
        luma = np.linspace(0, 1, 64, dtype=np.float32).reshape(8, 8)

        loaded, chroma = load_image(save_image(self.root / 'grey.png', luma))

        self.assertIsNone(chroma)
        np.testing.assert_allclose(loaded, luma, atol=0.5 / 255 + 1e-6)

    def test_colour_image_keeps_chroma(self):
        luma = np.full((8, 8), 0.5, dtype=np.float32)
        chroma = np.dstack((np.full((8, 8), 0.3), np.full((8, 8), 0.7))).astype(np.float32)

        loaded, loaded_chroma = load_image(save_image(self.root / 'colour.png', luma, chroma))

        self.assertEqual(loaded_chroma.shape, (8, 8, 2))
        np.testing.assert_allclose(loaded, luma, atol=0.02)

    def test_resize_on_load(self):
        save_image(self.root / 'big.png', np.zeros((32, 32), dtype=np.float32))

        loaded, _ = load_image(self.root / 'big.png', 16)

        self.assertEqual(loaded.shape, (16, 16))

    def test_missing_image_is_an_input_error(self):
        with self.assertRaises(InputValidationError):
            load_image(self.root / 'absent.png')


class AugmentationTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.pair = ImagePair('p', rng.random((8, 8), dtype=np.float32), rng.random((8, 8), dtype=np.float32))

    def test_zero_rotation_is_identity(self):
        np.testing.assert_array_equal(rotate(self.pair.a, RotationParams()), self.pair.a)

    def test_both_modalities_share_the_rotation(self):
        for seed in range(8):
            rotated, params = augment(self.pair, np.random.default_rng(seed))

            np.testing.assert_array_equal(rotated.a, rotate(self.pair.a, params))
            np.testing.assert_array_equal(rotated.b, rotate(self.pair.b, params))
            self.assertEqual(params.angle, 0.0)

    def test_quarter_turns_compose(self):
        twice = rotate(rotate(self.pair.a, RotationParams(1)), RotationParams(1))

        np.testing.assert_array_equal(twice, rotate(self.pair.a, RotationParams(2)))

    def test_small_angles_stay_in_range(self):
        _, params = augment(self.pair, np.random.default_rng(1), max_angle=10)

        self.assertLessEqual(abs(params.angle), 10)
