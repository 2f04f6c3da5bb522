import csv
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.filters.hann import hann_sqrt_response, identity_response
from apps.geometry.projector import SystemMatrix, build_system_matrix
from apps.geometry.scan import ImageGrid, ScanGeometry
from apps.solver.pdhg import IterationRecord

from .quality import improvement_percent, image_rmse, oscillation_index, write_convergence_csv
from .spectrum import mode_gain_profile, write_profile_csv


def records_from(series, start=1):
    nan = float('nan')
    return [IterationRecord(start + i, value, nan, nan, nan, nan, nan) for i, value in enumerate(series)]


class ImageRmseTests(SimpleTestCase):

    def test_identical_images(self):
        f = np.random.default_rng(0).random((8, 8))
        self.assertEqual(image_rmse(f, f), 0.0)

    def test_constant_offset(self):
        f = np.random.default_rng(1).random((8, 8))
        self.assertAlmostEqual(image_rmse(f - 0.3, f), 0.3, places=12)

    def test_matches_elementwise_oracle_and_is_symmetric(self):
        rng = np.random.default_rng(2)
        f, g = rng.random((2, 4, 4))
        oracle = math.sqrt(sum((f[i, j] - g[i, j]) ** 2 for i in range(4) for j in range(4)) / 16)
        self.assertAlmostEqual(image_rmse(f, g), oracle, delta=1e-14)
        self.assertEqual(image_rmse(f, g), image_rmse(g, f))

    def test_accepts_image_grids(self):
        grid = ImageGrid.square(4, 1.0, np.ones((4, 4)))
        self.assertEqual(image_rmse(grid, np.zeros((4, 4))), 1.0)

    def test_shape_mismatch_is_rejected(self):
        with self.assertRaises(ValueError):
            image_rmse(np.zeros((4, 4)), np.zeros((4, 5)))


class OscillationIndexTests(SimpleTestCase):

    def test_constant_series(self):
        self.assertEqual(oscillation_index(records_from([0.2] * 300)), 0.0)

    def test_linear_series(self):
        self.assertLess(oscillation_index(records_from(0.5 - 1e-3 * np.arange(300))), 1e-15)

    def test_alternating_series(self):
        a = 0.01
        series = [0.1 + (a if i % 2 else -a) for i in range(300)]
        self.assertAlmostEqual(oscillation_index(records_from(series)), 2 * a, places=12)

    def test_window_bounds_are_inclusive(self):
        series = [0.0] * 49 + [1.0] + [0.0] * 250
        self.assertGreater(oscillation_index(records_from(series)), 0.0)
        self.assertEqual(oscillation_index(records_from(series), window=(51, 200)), 0.0)

    def test_empty_window_is_rejected(self):
        with self.assertRaises(ValueError):
            oscillation_index(records_from([0.1] * 40))
        with self.assertRaises(ValueError):
            oscillation_index(records_from([0.1] * 300), window=(10, 10))


class ReportArithmeticTests(SimpleTestCase):

    def test_improvement_percent_for_the_coarsest_grid(self):
        self.assertEqual(improvement_percent(0.0332, 0.0128), 61.4)

    def test_improvement_against_an_exact_baseline_is_undefined(self):
        self.assertTrue(math.isnan(improvement_percent(0.0, 0.0)))
        self.assertTrue(math.isnan(improvement_percent(0.0, 0.01)))

    def test_convergence_csv_columns(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_convergence_csv(Path(tmp) / 'conv.csv', records_from([0.1, 0.01]))
            with path.open() as handle:
                rows = list(csv.DictReader(handle))
        self.assertEqual(list(rows[0]), ['iteration', 'rmse', 'log10_iteration', 'log10_rmse'])
        self.assertEqual(float(rows[1]['log10_rmse']), -2.0)
        self.assertAlmostEqual(float(rows[1]['log10_iteration']), math.log10(2), places=9)


class ModeGainTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        geom = ScanGeometry(n_detector_bins=128)
        cls.A = build_system_matrix(geom, ImageGrid.square(64, geom.fov_side))
        cls.identity = identity_response(128)
        cls.hann = hann_sqrt_response(128, 4.0)

    def test_isometric_operator_has_unit_gain(self):
        A = SystemMatrix.from_matrix(np.eye(32), n_views=1, n_bins=32, n_rows=1, n_cols=32)
        profile = mode_gain_profile(A, identity_response(32), modes=[0, 1, 5, 16])
        self.assertTrue(np.allclose(profile.gains, 1.0, rtol=0, atol=1e-12))

    def test_weighting_never_increases_gain(self):
        modes = [0, 1, 2, 4, 8, 16, 32]
        plain = mode_gain_profile(self.A, self.identity, modes)
        weighted = mode_gain_profile(self.A, self.hann, modes)
        for k in modes:
            self.assertLessEqual(weighted.gain(k), plain.gain(k) * (1 + 1e-12))

    def test_gains_are_amplitude_invariant(self):
        one = mode_gain_profile(self.A, self.hann, [1, 8])
        big = mode_gain_profile(self.A, self.hann, [1, 8], amplitude=7.5)
        self.assertTrue(np.allclose(one.gains, big.gains, rtol=1e-12))

    def test_low_pass_weighting_keeps_the_lowest_mode_and_damps_the_mid_band(self):
        plain = mode_gain_profile(self.A, self.identity, [1, 8])
        weighted = mode_gain_profile(self.A, self.hann, [1, 8])
        retained_low = weighted.gain(1) / plain.gain(1)
        retained_mid = weighted.gain(8) / plain.gain(8)
        self.assertLess(weighted.gain(1), plain.gain(1))
        self.assertLess(retained_mid, retained_low)
        self.assertGreater(weighted.gain(1) / weighted.gain(8), plain.gain(1) / plain.gain(8))

    def test_z_modes_and_invalid_modes(self):
        profile = mode_gain_profile(self.A, self.identity, [0, 3], direction='z')
        self.assertEqual(profile.direction, 'z')
        self.assertTrue(all(g > 0 for g in profile.gains))
        with self.assertRaises(ValueError):
            mode_gain_profile(self.A, self.identity, [33])
        with self.assertRaises(ValueError):
            mode_gain_profile(self.A, self.identity, [1], direction='y')

    def test_profile_csv(self):
        profile = mode_gain_profile(self.A, self.identity, [0, 1, 2])
        with tempfile.TemporaryDirectory() as tmp:
            path = write_profile_csv(Path(tmp) / 'p.csv', profile)
            rows = path.read_text().splitlines()
        self.assertEqual(rows[0], 'mode,gain')
        self.assertEqual(len(rows), 4)
