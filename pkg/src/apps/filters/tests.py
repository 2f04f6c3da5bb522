import csv
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from apps.geometry.scan import Sinogram

from .hann import (
    FilterSpec, apply_filter, build_response, complement_response, complementarity_deviation,
    filter_rows, hann_sqrt_response, identity_response, write_response_csv,
)


class HannResponseTests(SimpleTestCase):

    def test_gain_at_dc_cutoff_and_half_cutoff(self):
        # n=64, c=4: nu_c = 0.125 cycles/bin = index 8
        gains = hann_sqrt_response(64, 4.0).gains
        self.assertEqual(gains[0], 1.0)
        self.assertEqual(gains[8], 0.0)
        self.assertAlmostEqual(gains[4], math.sqrt(0.5), places=12)
        self.assertTrue(np.all(gains[9:56] == 0.0))

    def test_gains_are_even_and_bounded(self):
        gains = hann_sqrt_response(1024, 4.0).gains
        self.assertTrue(np.all((gains >= 0) & (gains <= 1)))
        self.assertTrue(np.array_equal(gains[1:], gains[1:][::-1]))

    def test_narrower_cutoff_nests_inside_wider(self):
        wide = hann_sqrt_response(256, 4.0).gains
        narrow = hann_sqrt_response(256, 8.0).gains
        self.assertTrue(np.all(narrow <= wide))

    def test_complement_values(self):
        base = hann_sqrt_response(64, 4.0)
        comp = complement_response(base).gains
        self.assertEqual(comp[0], 0.0)
        self.assertEqual(comp[32], 1.0)
        self.assertAlmostEqual(comp[4], math.sqrt(0.5), places=12)

    def test_build_response_by_kind(self):
        self.assertTrue(np.all(build_response(FilterSpec('identity', 4.0, 16)).gains == 1.0))
        comp = build_response(FilterSpec('hann_sqrt_complement', 4.0, 64))
        self.assertLess(complementarity_deviation(hann_sqrt_response(64, 4.0), comp), 1e-12)

    def test_invalid_specs_are_rejected(self):
        with self.assertRaises(ValueError):
            FilterSpec(cutoff_param=0.0)
        with self.assertRaises(ValueError):
            FilterSpec(kind='ramp')
        with self.assertRaises(ValueError):
            hann_sqrt_response(64, -1.0)


class ApplyFilterTests(SimpleTestCase):

    def test_identity_response_is_a_no_op(self):
        values = np.random.default_rng(1).standard_normal((5, 128))
        out = filter_rows(values, identity_response(128))
        self.assertLess(np.linalg.norm(out - values) / np.linalg.norm(values), 1e-12)

    def test_zero_sinogram_stays_zero(self):
        out = apply_filter(Sinogram(3, 64), hann_sqrt_response(64, 4.0))
        self.assertFalse(np.any(out.values))

    def test_centre_delta_matches_dft_oracle(self):
        n = 64
        response = hann_sqrt_response(n, 4.0)
        delta = np.zeros((1, n))
        delta[0, n // 2] = 1.0
        k = np.arange(n)
        dft = np.exp(-2j * np.pi * np.outer(k, k) / n)
        oracle = (np.conj(dft) @ (response.gains * (dft @ delta[0]))).real / n
        self.assertLess(np.max(np.abs(filter_rows(delta, response)[0] - oracle)), 1e-10)

    def test_filter_is_self_adjoint(self):
        rng = np.random.default_rng(7)
        for n in (64, 128, 127):
            response = hann_sqrt_response(n, 4.0)
            for _ in range(20):
                s, t = rng.standard_normal((2, 6, n))
                lhs = np.vdot(filter_rows(s, response), t)
                rhs = np.vdot(s, filter_rows(t, response))
                self.assertLess(abs(lhs - rhs) / abs(lhs), 1e-10)

    def test_double_application_equals_squared_response(self):
        response = hann_sqrt_response(128, 4.0)
        values = np.random.default_rng(2).standard_normal((4, 128))
        twice = filter_rows(filter_rows(values, response), response)
        once = filter_rows(values, response.squared())
        self.assertLess(np.max(np.abs(twice - once)), 1e-10)

    def test_bin_mismatch_is_rejected(self):
        with self.assertRaises(ValueError):
            apply_filter(Sinogram(2, 32), hann_sqrt_response(64, 4.0))


class ComplementarityTests(SimpleTestCase):

    def test_exact_complement_has_no_deviation(self):
        hi = hann_sqrt_response(1024, 4.0)
        self.assertLess(complementarity_deviation(hi, complement_response(hi)), 1e-12)
        self.assertLess(complementarity_deviation(hi, complement_response(hi), 0.1), 1e-12)

    def test_identity_pair_deviates_by_one(self):
        ident = identity_response(32)
        self.assertEqual(complementarity_deviation(ident, ident, 0.25), 1.0)

    def test_default_channel_pair_is_finite(self):
        deviation = complementarity_deviation(
            hann_sqrt_response(1024, 4.0), hann_sqrt_response(1024, 8.0), passband_limit=0.5 / 4,
        )
        self.assertTrue(np.isfinite(deviation))
        self.assertGreater(deviation, 0.0)

    def test_response_csv_lists_every_frequency(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_response_csv(Path(tmp) / 'hann.csv', hann_sqrt_response(16, 4.0))
            with path.open() as handle:
                rows = list(csv.DictReader(handle))
        self.assertEqual(len(rows), 16)
        self.assertEqual(float(rows[8]['frequency']), 0.0)
        self.assertEqual(float(rows[8]['gain']), 1.0)
