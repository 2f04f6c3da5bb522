import numpy as np
from django.test import SimpleTestCase

from apps.geometry.scan import ImageGrid

from .operators import dtv_value, grad_adjoint_x, grad_adjoint_z, grad_x, grad_z


def dense_difference(n, axis, boundary='neumann'):
    """Explicit matrix of the forward difference on a row-major n x n grid"""
    D = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            ni, nj = (i, j + 1) if axis == 1 else (i + 1, j)
            if boundary == 'periodic':
                ni, nj = ni % n, nj % n
            elif ni == n or nj == n:
                continue
            D[i * n + j, ni * n + nj] += 1.0
            D[i * n + j, i * n + j] -= 1.0
    return D


class GradientTests(SimpleTestCase):

    def test_constant_image_has_zero_gradient(self):
        f = np.full((6, 9), 3.5)
        for boundary in ('neumann', 'periodic'):
            self.assertFalse(np.any(grad_x(f, boundary)))
            self.assertFalse(np.any(grad_z(f, boundary)))

    def test_vertical_step_edge(self):
        f = np.zeros((8, 8))
        f[:, 5:] = 0.7
        gx = grad_x(f)
        self.assertTrue(np.allclose(gx[:, 4], 0.7))
        self.assertEqual(np.count_nonzero(gx), 8)
        self.assertFalse(np.any(grad_z(f)))

    def test_matches_dense_operator(self):
        f = np.random.default_rng(0).standard_normal((16, 16))
        for boundary in ('neumann', 'periodic'):
            self.assertTrue(np.array_equal(grad_x(f, boundary).ravel(),
                                           dense_difference(16, 1, boundary) @ f.ravel()))
            self.assertTrue(np.array_equal(grad_z(f, boundary).ravel(),
                                           dense_difference(16, 0, boundary) @ f.ravel()))

    def test_accepts_image_grids(self):
        grid = ImageGrid.square(4, 1.0, np.arange(16.0).reshape(4, 4))
        self.assertTrue(np.array_equal(grad_x(grid)[:, :3], np.ones((4, 3))))
        self.assertTrue(np.array_equal(grad_z(grid)[:3], np.full((3, 4), 4.0)))

    def test_degenerate_grid_is_rejected(self):
        with self.assertRaises(ValueError):
            grad_x(np.zeros((1, 5)))
        with self.assertRaises(ValueError):
            grad_z(np.zeros((4, 4)), boundary='mirror')


class AdjointTests(SimpleTestCase):

    def test_adjoint_identity_over_random_pairs(self):
        rng = np.random.default_rng(4)
        for shape in ((16, 16), (32, 32), (64, 64), (7, 12)):
            for boundary in ('neumann', 'periodic'):
                for forward, adjoint in ((grad_x, grad_adjoint_x), (grad_z, grad_adjoint_z)):
                    f = rng.standard_normal(shape)
                    p = rng.standard_normal(shape)
                    lhs = np.vdot(forward(f, boundary), p)
                    rhs = np.vdot(f, adjoint(p, boundary))
                    self.assertLess(abs(lhs - rhs) / abs(lhs), 1e-12)

    def test_matches_dense_transpose(self):
        p = np.random.default_rng(1).standard_normal((16, 16))
        self.assertTrue(np.allclose(grad_adjoint_x(p).ravel(), dense_difference(16, 1).T @ p.ravel(),
                                    rtol=0, atol=1e-14))

    def test_zero_maps_to_zero(self):
        self.assertFalse(np.any(grad_adjoint_x(np.zeros((5, 5)))))
        self.assertFalse(np.any(grad_adjoint_z(np.zeros((5, 5)))))

    def test_single_entry_gives_a_dipole(self):
        p = np.zeros((6, 6))
        p[2, 3] = 1.5
        out = grad_adjoint_x(p)
        self.assertEqual(out[2, 3], -1.5)
        self.assertEqual(out[2, 4], 1.5)
        self.assertEqual(np.count_nonzero(out), 2)
        out = grad_adjoint_z(p)
        self.assertEqual(out[2, 3], -1.5)
        self.assertEqual(out[3, 3], 1.5)

    def test_operator_norm_is_at_most_two(self):
        x = np.random.default_rng(2).standard_normal((64, 64))
        for _ in range(200):
            x = grad_adjoint_x(grad_x(x))
            x /= np.linalg.norm(x)
        estimate = np.sqrt(np.linalg.norm(grad_adjoint_x(grad_x(x))))
        self.assertLessEqual(estimate, 2.0 + 1e-6)


class DirectionalTvTests(SimpleTestCase):

    def test_zero_image(self):
        self.assertEqual(dtv_value(np.zeros((8, 8)), 1.9, 1.9, 10.0), 0.0)

    def test_isolated_pixel(self):
        f = np.zeros((8, 8))
        f[3, 4] = 0.5
        self.assertAlmostEqual(dtv_value(f, 1.9, 0.7, 10.0), 10.0 * 0.5 + 1.9 * 1.0 + 0.7 * 1.0, places=12)

    def test_matches_elementwise_summation(self):
        f = np.random.default_rng(3).standard_normal((8, 8))
        expected = 0.0
        for i in range(8):
            for j in range(8):
                expected += 2.0 * abs(f[i, j])
                if j < 7:
                    expected += 1.5 * abs(f[i, j + 1] - f[i, j])
                if i < 7:
                    expected += 0.25 * abs(f[i + 1, j] - f[i, j])
        self.assertAlmostEqual(dtv_value(f, 1.5, 0.25, 2.0), expected, delta=1e-12 * expected)

    def test_absolutely_homogeneous(self):
        f = np.random.default_rng(5).random((12, 12))
        base = dtv_value(f, 1.0, 2.0, 3.0)
        for t in (-2.5, 0.0, 4.0):
            self.assertAlmostEqual(dtv_value(t * f, 1.0, 2.0, 3.0), abs(t) * base, delta=1e-12 * (1 + abs(t) * base))
