import numpy as np
from django.test import SimpleTestCase

from .generator import (
    ADIPOSE, CALCIFICATION, FIBROGLANDULAR, PhantomSpec, downsample_consistent,
    make_phantom, power_law_noise, radial_power_spectrum,
)


class PowerLawNoiseTests(SimpleTestCase):

    def test_normalised_to_zero_mean_unit_variance(self):
        field = power_law_noise(64, 3.0, seed=1).values
        self.assertAlmostEqual(field.mean(), 0.0, places=10)
        self.assertAlmostEqual(field.std(), 1.0, places=10)

    def test_white_noise_spectrum_is_flat(self):
        spectrum = radial_power_spectrum(power_law_noise(256, 0.0, seed=2).values)
        # middle two octaves, pooled into log-spaced bands
        edges = np.unique(np.round(np.geomspace(16, 64, 7)).astype(int))
        bands = [spectrum[lo:hi].mean() for lo, hi in zip(edges[:-1], edges[1:])]
        self.assertLess(np.max(np.abs(np.array(bands) / np.mean(bands) - 1.0)), 0.2)

    def test_spectral_slope_matches_exponent(self):
        spectrum = radial_power_spectrum(power_law_noise(256, 3.0, seed=3).values)
        k = np.arange(16, 65)
        slope = np.polyfit(np.log10(k), np.log10(spectrum[k]), 1)[0]
        self.assertAlmostEqual(slope, -3.0, delta=0.3)

    def test_same_seed_is_bit_identical(self):
        a = power_law_noise(128, 3.0, seed=9).values
        b = power_law_noise(128, 3.0, seed=9).values
        self.assertTrue(np.array_equal(a, b))
        self.assertFalse(np.array_equal(a, power_law_noise(128, 3.0, seed=10).values))

    def test_too_small_grid_is_rejected(self):
        with self.assertRaises(ValueError):
            power_law_noise(4, 3.0, seed=0)


class MakePhantomTests(SimpleTestCase):

    def test_value_set_is_the_tissue_weights(self):
        phantom = make_phantom(PhantomSpec(n_pixels=128, tissue_weights=(0.5, 1.0, 2.0)))
        values = phantom.values.values
        self.assertEqual(set(np.unique(values[values != 0]).tolist()), {0.5, 1.0, 2.0})

    def test_without_calcifications_the_maximum_is_one(self):
        phantom = make_phantom(PhantomSpec(n_pixels=128, n_calcifications=0))
        self.assertEqual(phantom.values.values.max(), 1.0)

    def test_glandular_fraction_is_honoured(self):
        phantom = make_phantom(PhantomSpec(n_pixels=256, glandular_fraction=0.3))
        self.assertAlmostEqual(phantom.label_fraction(FIBROGLANDULAR), 0.30, delta=0.01)

    def test_labels_and_values_agree(self):
        spec = PhantomSpec(n_pixels=64, seed=5)
        phantom = make_phantom(spec)
        self.assertTrue(np.array_equal(phantom.values.values, spec.weight_table()[phantom.labels]))
        self.assertTrue(np.any(phantom.labels == CALCIFICATION))
        self.assertTrue(np.any(phantom.labels == ADIPOSE))

    def test_deterministic_in_seed(self):
        spec = PhantomSpec(n_pixels=64, seed=77)
        first, second = make_phantom(spec), make_phantom(spec)
        self.assertTrue(np.array_equal(first.values.values, second.values.values))
        self.assertTrue(np.array_equal(first.labels, second.labels))

    def test_too_many_calcifications_is_rejected(self):
        with self.assertRaises(ValueError):
            make_phantom(PhantomSpec(n_pixels=8, glandular_fraction=0.05, n_calcifications=20))

    def test_invalid_specs_are_rejected(self):
        with self.assertRaises(ValueError):
            PhantomSpec(glandular_fraction=1.5)
        with self.assertRaises(ValueError):
            PhantomSpec(n_calcifications=-1)
        with self.assertRaises(ValueError):
            PhantomSpec(tissue_weights=(0.5, -1.0, 2.0))


class DownsampleConsistentTests(SimpleTestCase):

    def test_same_size_is_identity(self):
        spec = PhantomSpec(n_pixels=128, seed=3)
        self.assertTrue(np.array_equal(downsample_consistent(spec, 128).values.values,
                                       make_phantom(spec).values.values))

    def test_native_regeneration_is_reproducible(self):
        spec = PhantomSpec(n_pixels=256, seed=3)
        a = downsample_consistent(spec, 128)
        b = downsample_consistent(spec, 128)
        self.assertTrue(np.array_equal(a.values.values, b.values.values))
        self.assertEqual(a.values.shape, (128, 128))
        self.assertAlmostEqual(a.values.pixel_size, 10.0 / 128)

    def test_native_resolutions_differ_pixelwise(self):
        spec = PhantomSpec(n_pixels=256, seed=3)
        coarse = downsample_consistent(spec, 128).values.values
        fine = downsample_consistent(spec, 256).values.values
        self.assertFalse(np.array_equal(coarse, fine[::2, ::2]))

    def test_block_downsampling_keeps_the_value_set(self):
        spec = PhantomSpec(n_pixels=256, seed=3)
        coarse = downsample_consistent(spec, 64, method='downsample')
        values = coarse.values.values
        self.assertTrue(set(np.unique(values).tolist()) <= {0.5, 1.0, 2.0})
        self.assertTrue(np.any(coarse.labels == CALCIFICATION))

    def test_invalid_targets_are_rejected(self):
        spec = PhantomSpec(n_pixels=256)
        with self.assertRaises(ValueError):
            downsample_consistent(spec, 4)
        with self.assertRaises(ValueError):
            downsample_consistent(spec, 96, method='downsample')

    def test_native_radii_scale_from_the_finest_grid(self):
        spec = PhantomSpec(n_pixels=512, seed=3, calc_radius_px=(2, 4))
        phantom = downsample_consistent(spec, 256)
        self.assertEqual(phantom.spec.calc_radius_px, (1, 2))
        specks = np.count_nonzero(phantom.labels == CALCIFICATION)
        # radius 1 and 2 discs cover 5 and 13 pixels
        self.assertGreater(specks, spec.n_calcifications)
        self.assertLessEqual(specks, 13 * spec.n_calcifications)
