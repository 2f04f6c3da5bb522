import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from .projector import (
    SystemMatrix, back_project, build_system_matrix, forward_project, ray_endpoints,
)
from .scan import ImageGrid, ScanGeometry, Sinogram, view_angles
from .storage import load_image, load_sinogram, read_sidecar, save_image, save_sinogram


def scaled_geometry(**overrides):
    """Default geometry with the detector reduced to 128 bins"""
    params = {'n_detector_bins': 128}
    params.update(overrides)
    return ScanGeometry(**params)


def sampled_matrix(geom, grid, samples=100_000):
    """Dense X from midpoint sampling of each ray clipped to the grid box"""
    sources, targets = ray_endpoints(geom)
    x_edges, z_edges = grid.x_edges(), grid.z_edges()
    lo = np.array([x_edges[0], z_edges[-1]])
    hi = np.array([x_edges[-1], z_edges[0]])
    dense = np.zeros((geom.n_measurements, grid.size))
    for ray, (src, dst) in enumerate(zip(sources, targets)):
        d = dst - src
        t0, t1 = 0.0, 1.0
        for axis in range(2):
            if d[axis] == 0:
                if not lo[axis] <= src[axis] <= hi[axis]:
                    t0, t1 = 1.0, 0.0
                continue
            a, b = sorted(((lo[axis] - src[axis]) / d[axis], (hi[axis] - src[axis]) / d[axis]))
            t0, t1 = max(t0, a), min(t1, b)
        if t1 <= t0:
            continue
        t = t0 + (np.arange(samples) + 0.5) / samples * (t1 - t0)
        step = (t1 - t0) * math.hypot(*d) / samples
        xs, zs = src[0] + t * d[0], src[1] + t * d[1]
        cols = np.clip(np.floor((xs - x_edges[0]) / grid.pixel_size).astype(int), 0, grid.n_cols - 1)
        rows = np.clip(np.floor((z_edges[0] - zs) / grid.pixel_size).astype(int), 0, grid.n_rows - 1)
        np.add.at(dense[ray], rows * grid.n_cols + cols, step)
    return dense


class ViewAngleTests(SimpleTestCase):

    def test_default_arc_is_symmetric_with_equal_spacing(self):
        angles = view_angles(ScanGeometry())
        self.assertEqual(len(angles), 25)
        self.assertAlmostEqual(angles[0], -25.0)
        self.assertAlmostEqual(angles[-1], 25.0)
        self.assertTrue(np.allclose(np.diff(angles), 50.0 / 24.0))

    def test_single_view_sits_on_the_axis(self):
        self.assertEqual(view_angles(ScanGeometry(n_views=1)), [0.0])

    def test_three_views_over_ninety_degrees(self):
        self.assertTrue(np.allclose(view_angles(ScanGeometry(n_views=3, arc_span=90)), [-45, 0, 45]))


class ScanGeometryTests(SimpleTestCase):

    def test_default_detector_covers_magnified_fov_circle(self):
        geom = ScanGeometry()
        self.assertAlmostEqual(geom.detector_length, 10 * math.sqrt(2) * 2, places=9)

    def test_measurement_count_is_resolution_independent(self):
        self.assertEqual(ScanGeometry().n_measurements, 25_600)

    def test_invalid_geometries_are_rejected(self):
        with self.assertRaises(ValueError):
            ScanGeometry(n_views=0)
        with self.assertRaises(ValueError):
            ScanGeometry(source_to_detector=40.0)
        with self.assertRaises(ValueError):
            ScanGeometry(n_detector_bins=0)
        with self.assertRaises(ValueError):
            ScanGeometry(fov_side=0)

    def test_zero_pixel_size_is_rejected(self):
        with self.assertRaises(ValueError):
            ImageGrid(8, 8, 0.0)

    def test_geometry_hash_tracks_parameters(self):
        self.assertEqual(ScanGeometry().geometry_hash(), ScanGeometry().geometry_hash())
        self.assertNotEqual(ScanGeometry().geometry_hash(), scaled_geometry().geometry_hash())


class SystemMatrixTests(SimpleTestCase):

    def test_grid_outside_every_ray_gives_empty_matrix(self):
        grid = ImageGrid(8, 8, 0.1, origin=(500.0, 0.0))
        A = build_system_matrix(scaled_geometry(n_views=3), grid)
        self.assertEqual(A.nnz, 0)
        self.assertEqual(A.shape, (3 * 128, 64))

    def test_central_ray_crosses_the_full_square(self):
        geom = ScanGeometry(n_views=1, n_detector_bins=1)
        for n in (15, 16):
            A = build_system_matrix(geom, ImageGrid.square(n, 10.0))
            g = A.forward(np.ones((n, n)))
            self.assertAlmostEqual(g[0, 0], 10.0, delta=1e-9)

    def test_matches_dense_sampling_oracle(self):
        geom = ScanGeometry(n_views=3, n_detector_bins=16)
        grid = ImageGrid.square(8, 10.0)
        A = build_system_matrix(geom, grid)
        oracle = sampled_matrix(geom, grid)
        self.assertLess(np.max(np.abs(A.matrix.toarray() - oracle)), 1e-3)

    def test_lengths_nonnegative_and_bounded_by_diagonal(self):
        geom = scaled_geometry()
        A = build_system_matrix(geom, ImageGrid.square(32, geom.fov_side))
        self.assertGreaterEqual(A.matrix.data.min(), 0.0)
        self.assertTrue(np.all(A.ray_lengths() <= geom.fov_side * math.sqrt(2) + 1e-9))

    def test_adjoint_is_exact_transpose(self):
        A = build_system_matrix(scaled_geometry(n_views=5), ImageGrid.square(16, 10.0))
        self.assertEqual(abs(A.adjoint_matrix - A.matrix.T).max(), 0.0)

    def test_worker_count_does_not_change_the_matrix(self):
        geom = scaled_geometry()
        grid = ImageGrid.square(16, 10.0)
        serial = build_system_matrix(geom, grid, workers=1)
        threaded = build_system_matrix(geom, grid, workers=3)
        self.assertTrue(np.array_equal(serial.matrix.indptr, threaded.matrix.indptr))
        self.assertTrue(np.array_equal(serial.matrix.indices, threaded.matrix.indices))
        self.assertTrue(np.array_equal(serial.matrix.data, threaded.matrix.data))

    def test_rotating_detector_sees_the_object_in_every_view(self):
        geom = scaled_geometry(detector_mode='rotating')
        A = build_system_matrix(geom, ImageGrid.square(16, 10.0))
        g = A.forward(np.ones((16, 16)))
        self.assertTrue(np.all(g.sum(axis=1) > 0))


class ProjectionTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.geom = scaled_geometry()
        cls.grids = {n: ImageGrid.square(n, cls.geom.fov_side) for n in (16, 32, 64)}
        cls.matrices = {n: build_system_matrix(cls.geom, grid) for n, grid in cls.grids.items()}

    def test_zero_image_projects_to_zero(self):
        g = forward_project(self.matrices[16], self.grids[16])
        self.assertFalse(np.any(g.values))

    def test_single_pixel_projects_to_its_column(self):
        A = self.matrices[16]
        f = np.zeros((16, 16))
        f[5, 9] = 1.0
        g = forward_project(A, self.grids[16].with_values(f))
        column = A.matrix[:, 5 * 16 + 9].toarray().ravel()
        self.assertTrue(np.array_equal(g.values.ravel(), column))

    def test_matches_dense_product(self):
        A = self.matrices[16]
        f = np.random.default_rng(3).random((16, 16))
        g = A.forward(f)
        dense = A.matrix.toarray() @ f.ravel()
        self.assertLess(np.linalg.norm(g.ravel() - dense) / np.linalg.norm(dense), 1e-12)

    def test_zero_sinogram_backprojects_to_zero(self):
        image = back_project(self.matrices[16], Sinogram.for_geometry(self.geom))
        self.assertFalse(np.any(image.values))
        self.assertEqual(image.pixel_size, self.grids[16].pixel_size)

    def test_single_ray_backprojects_to_its_footprint(self):
        A = self.matrices[32]
        y = np.zeros(A.sinogram_shape)
        y[12, 64] = 1.0
        image = A.backward(y)
        row = A.matrix[12 * 128 + 64].toarray().ravel()
        self.assertTrue(np.array_equal(image.ravel(), row))

    def test_adjoint_identity_over_random_pairs(self):
        rng = np.random.default_rng(11)
        for n, A in self.matrices.items():
            for _ in range(100):
                f = rng.standard_normal(A.image_shape)
                y = rng.standard_normal(A.sinogram_shape)
                lhs = np.vdot(A.forward(f), y)
                rhs = np.vdot(f, A.backward(y))
                self.assertLess(abs(lhs - rhs) / max(abs(lhs), 1e-30), 1e-10, msg=f'grid {n}')

    def test_forward_projection_is_linear(self):
        A = self.matrices[32]
        rng = np.random.default_rng(5)
        f, h = rng.random((2, 32, 32))
        combined = A.forward(2.5 * f - 0.75 * h)
        separate = 2.5 * A.forward(f) - 0.75 * A.forward(h)
        self.assertTrue(np.allclose(combined, separate, rtol=1e-12, atol=1e-12))

    def test_shape_mismatch_is_rejected(self):
        with self.assertRaises(ValueError):
            forward_project(self.matrices[16], self.grids[32])
        with self.assertRaises(ValueError):
            back_project(self.matrices[16], Sinogram(3, 128))

    def test_from_matrix_checks_shape(self):
        with self.assertRaises(ValueError):
            SystemMatrix.from_matrix(np.eye(4), n_views=1, n_bins=3, n_rows=2, n_cols=2)


class StorageTests(SimpleTestCase):

    def test_image_and_sinogram_files_with_sidecars(self):
        geom = scaled_geometry(n_views=2)
        grid = ImageGrid.square(8, 10.0, values=np.arange(64, dtype=float).reshape(8, 8) / 7.0)
        sino = Sinogram.for_geometry(geom, np.linspace(0, 1, 256))
        with tempfile.TemporaryDirectory() as tmp:
            save_image(Path(tmp) / 'image', grid, geometry_hash=geom.geometry_hash(), extra={'seed': 4})
            save_sinogram(Path(tmp) / 'sino', sino, geom)

            raw = (Path(tmp) / 'image.f32').read_bytes()
            self.assertEqual(len(raw), 64 * 4)
            self.assertEqual(np.frombuffer(raw, '<f4')[9], np.float32(9 / 7.0))
            meta = read_sidecar(Path(tmp) / 'image.json')
            self.assertEqual(meta['seed'], 4)
            self.assertEqual(meta['geometry_hash'], geom.geometry_hash())
            self.assertEqual(json.loads((Path(tmp) / 'sino.json').read_text())['n_bins'], 128)

            self.assertTrue(np.array_equal(load_image(Path(tmp) / 'image').values,
                                           grid.values.astype(np.float32)))
            self.assertEqual(load_sinogram(Path(tmp) / 'sino').shape, (2, 128))
