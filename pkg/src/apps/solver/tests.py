import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.optimize import linprog

from apps.diffops.operators import dtv_value, grad_adjoint_x, grad_x, grad_z
from apps.filters.hann import FilterSpec
from apps.geometry.projector import build_system_matrix
from apps.geometry.scan import ImageGrid, ScanGeometry

from .config import SolverConfig
from .exceptions import DivergenceError, StepSizeError
from .kernels import dual_update_fidelity, dual_update_l1, primal_update, reflect, relax
from .pdhg import PDHGSolver, ReconstructionProblem, SolverState, compute_step_sizes, run
from .power import estimate_operator_norm
from .telemetry import TelemetryWriter, read_telemetry


def small_problem(n=8, n_views=5, n_bins=16):
    geom = ScanGeometry(n_views=n_views, n_detector_bins=n_bins)
    A = build_system_matrix(geom, ImageGrid.square(n, geom.fov_side))
    truth = np.full((n, n), 0.5)
    truth[2:5, 3:6] = 1.0
    truth[6, 1] = 2.0
    return ReconstructionProblem(A, A.forward(truth), truth)


def small_config(**overrides):
    params = {
        'alpha_x': 0.1, 'alpha_z': 0.1, 'beta': 0.05, 'eps_hi': 0.0,
        'rho': 1.0, 'n_iter': 50, 'power_iters': 200, 'log_every': 1000,
        'filter_hi': FilterSpec('hann_sqrt', 4.0, 16),
    }
    params.update(overrides)
    return SolverConfig(**params)


def lp_oracle(problem, alpha_x, alpha_z, beta):
    """Optimum of the eps=0 problem solved as a linear program"""
    A, g = problem.A, problem.g.ravel()
    n_rows, n_cols = A.image_shape
    N = n_rows * n_cols
    X = A.matrix.toarray()
    eye = np.eye(N)
    Dx = np.column_stack([grad_x(e.reshape(n_rows, n_cols)).ravel() for e in eye])
    Dz = np.column_stack([grad_z(e.reshape(n_rows, n_cols)).ravel() for e in eye])
    zero = np.zeros((N, N))
    # |D f| <= t, written as two one-sided inequalities per direction
    A_ub = np.block([
        [Dx, -eye, zero], [-Dx, -eye, zero],
        [Dz, zero, -eye], [-Dz, zero, -eye],
    ])
    # X f = g restricted to the range of X
    U, S, _ = np.linalg.svd(X, full_matrices=False)
    rank = int(np.sum(S > S[0] * 1e-10))
    basis = U[:, :rank].T
    A_eq = np.hstack([basis @ X, np.zeros((rank, 2 * N))])
    c = np.concatenate([np.full(N, beta), np.full(N, alpha_x), np.full(N, alpha_z)])
    result = linprog(c, A_ub=A_ub, b_ub=np.zeros(4 * N), A_eq=A_eq, b_eq=basis @ g,
                     bounds=(0, None), method='highs')
    if result.status != 0:
        raise AssertionError(f'LP oracle failed: {result.message}')
    return result.fun


class PowerIterationTests(SimpleTestCase):

    def test_diagonal_map(self):
        d = np.array([3.0, 1.0, 0.5])
        self.assertAlmostEqual(estimate_operator_norm(lambda x: d * x, lambda y: d * y, (3,), iters=50), 3.0,
                               delta=1e-6)

    def test_identity_map(self):
        for shape in ((5,), (4, 7)):
            self.assertAlmostEqual(estimate_operator_norm(lambda x: x, lambda y: y, shape, iters=5), 1.0,
                                   places=12)

    def test_difference_operator_is_bounded_by_two(self):
        estimate = estimate_operator_norm(grad_x, grad_adjoint_x, (64, 64), iters=100)
        self.assertLessEqual(estimate, 2.0 + 1e-6)
        self.assertGreater(estimate, 1.9)

    def test_deterministic_and_nondecreasing(self):
        M = np.random.default_rng(8).standard_normal((12, 9))
        norms = [estimate_operator_norm(lambda x: M @ x, lambda y: M.T @ y, (9,), iters=k, seed=3)
                 for k in (1, 2, 5, 10, 40)]
        self.assertTrue(all(a <= b * (1 + 1e-12) for a, b in zip(norms, norms[1:])))
        self.assertEqual(norms[-1], estimate_operator_norm(lambda x: M @ x, lambda y: M.T @ y, (9,),
                                                           iters=40, seed=3))
        self.assertLessEqual(norms[-1], np.linalg.norm(M, 2) * (1 + 1e-12))

    def test_non_adjoint_pair_is_rejected(self):
        M = np.random.default_rng(9).standard_normal((4, 4))
        with self.assertRaises(ValueError):
            estimate_operator_norm(lambda x: M @ x, lambda y: M @ y, (4,))

    def test_non_finite_iterate_raises(self):
        with self.assertRaises(DivergenceError):
            estimate_operator_norm(lambda x: x * np.inf, lambda y: y, (3,), check=False)


class KernelTests(SimpleTestCase):

    def test_fidelity_without_tolerance_is_pure_ascent(self):
        y = np.array([0.2, -0.1])
        r = np.array([1.0, 2.0])
        self.assertTrue(np.array_equal(dual_update_fidelity(y, r, 0.5, 0.0), y + 0.5 * r))

    def test_fidelity_dead_zone(self):
        out = dual_update_fidelity(np.zeros(3), np.array([0.1, 0.0, 0.0]), 1.0, 0.2)
        self.assertFalse(np.any(out))
        self.assertFalse(np.any(dual_update_fidelity(np.zeros(2), np.zeros(2), 1.0, 0.0)))

    def test_fidelity_shrink_of_unit_vector(self):
        out = dual_update_fidelity(np.zeros(4), np.array([0.0, 1.0, 0.0, 0.0]), 1.0, 0.25)
        self.assertAlmostEqual(np.linalg.norm(out), 0.75, places=15)

    def test_fidelity_ball_projection(self):
        out = dual_update_fidelity(np.zeros(2), np.array([3.0, 4.0]), 1.0, 2.0, method='ball_projection')
        self.assertAlmostEqual(np.linalg.norm(out), 2.0, places=14)
        inside = dual_update_fidelity(np.zeros(2), np.array([0.3, 0.4]), 1.0, 2.0, method='ball_projection')
        self.assertTrue(np.allclose(inside, [0.3, 0.4]))

    def test_l1_dual_clamp(self):
        self.assertFalse(np.any(dual_update_l1(np.array([0.5, -2.0]), np.array([1.0, 1.0]), 1.0, 0.0)))
        p = np.array([0.3, -0.9])
        self.assertTrue(np.array_equal(dual_update_l1(p, np.array([7.0, 7.0]), 0.0, 1.0), p))
        out = dual_update_l1(np.array([4.0, -0.1]), np.array([1.0, 0.0]), 1.0, 1.0)
        self.assertTrue(np.array_equal(out, [1.0, -0.1]))

    def test_primal_update(self):
        f = np.array([0.4, -0.3, 0.0])
        self.assertTrue(np.array_equal(primal_update(f, np.zeros(3), 0.5, 0.0), [0.4, 0.0, 0.0]))
        out = primal_update(np.array([0.3, -0.2]), np.zeros(2), 0.5, 0.2)
        self.assertTrue(np.allclose(out, [0.2, 0.0], rtol=0, atol=1e-15))
        f = np.array([1.0, 2.0])
        self.assertTrue(np.array_equal(primal_update(f, np.zeros(2), 0.1, 0.0), f))


def state_with(f, **extra):
    zero = np.zeros_like(f)
    values = {'f': f, 'f_bar': f, 'y_hi': zero, 'y_lo': None, 'p_x': zero, 'p_z': zero,
              'projection': zero, 'projection_bar': zero}
    values.update(extra)
    return SolverState(**values)


class RelaxTests(SimpleTestCase):

    def test_unit_relaxation_is_classical_extrapolation(self):
        prev, new = state_with(np.array([1.0, 2.0])), state_with(np.array([1.5, 1.0]))
        self.assertTrue(np.array_equal(relax(prev, new, 1.0).f_bar, 2 * new.f - prev.f))

    def test_fixed_point(self):
        f = np.array([0.7, 0.1])
        self.assertTrue(np.array_equal(relax(state_with(f), state_with(f.copy()), 1.75).f_bar, f))

    def test_over_relaxation_from_zero(self):
        v = np.array([0.4, 1.2])
        out = relax(state_with(np.zeros(2)), state_with(v), 1.75)
        self.assertTrue(np.allclose(out.f_bar, 2.75 * v, rtol=1e-15))
        self.assertTrue(np.array_equal(out.f, v))

    def test_primal_and_dual_scope_moves_every_variable(self):
        prev = state_with(np.zeros(2), p_x=np.array([0.0, 1.0]))
        new = state_with(np.array([1.0, 1.0]), p_x=np.array([1.0, 1.0]))
        out = relax(prev, new, 1.5, scope='primal_and_dual')
        self.assertTrue(np.allclose(out.f, [1.5, 1.5]))
        self.assertTrue(np.allclose(out.p_x, [1.5, 1.0]))
        self.assertTrue(np.array_equal(out.f_bar, out.f))
        self.assertIsNone(out.y_lo)

    def test_reflection_touches_only_the_duals(self):
        prev = state_with(np.zeros(2), p_x=np.array([0.5, 1.0]))
        new = state_with(np.array([1.0, 1.0]), p_x=np.array([1.0, 1.0]))
        out = reflect(prev, new)
        self.assertTrue(np.allclose(out.p_x, [1.5, 1.0]))
        self.assertTrue(np.array_equal(out.f, new.f))
        self.assertIsNone(out.y_lo)


class ConfigTests(SimpleTestCase):

    def test_low_channel_tolerance_defaults_to_scaled_high(self):
        self.assertAlmostEqual(SolverConfig(eps_hi=2e-5).eps_lo, 2.5e-5)
        self.assertEqual(SolverConfig(eps_hi=2e-5, eps_lo=0.0).eps_lo, 0.0)

    def test_two_channel_requires_low_filter(self):
        with self.assertRaises(ValueError):
            SolverConfig(mode='two_channel')

    def test_invalid_values_are_rejected(self):
        for bad in ({'rho': 2.0}, {'rho': 0.0}, {'eps_hi': -1.0}, {'n_iter': 0}, {'sigma_ratio': 0.0},
                    {'relaxation_scope': 'dual_only'}, {'fidelity_prox': 'clip'}, {'mode': 'triple'}):
            with self.assertRaises(ValueError, msg=str(bad)):
                SolverConfig(**bad)

    def test_with_bins_resizes_both_filters(self):
        cfg = SolverConfig(mode='two_channel', filter_lo=FilterSpec('hann_sqrt', 8.0)).with_bins(64)
        self.assertEqual((cfg.filter_hi.n_bins, cfg.filter_lo.n_bins), (64, 64))


class StepSizeTests(SimpleTestCase):

    def test_sizing_meets_the_margin(self):
        steps = compute_step_sizes({'hi': 12.0, 'lo': 5.0, 'x': 2.0, 'z': 2.0}, sigma_ratio=4.0, margin=0.95)
        self.assertAlmostEqual(steps.stability_product(), 0.95, places=12)
        self.assertEqual(steps.sigma_lo, 4.0 * steps.sigma_hi)
        self.assertEqual(steps.tau, steps.sigma_hi)

    def test_single_channel_has_no_low_step(self):
        steps = compute_step_sizes({'hi': 3.0, 'x': 2.0, 'z': 2.0}, sigma_ratio=4.0)
        self.assertEqual(steps.sigma_lo, 0.0)

    def test_degenerate_operators_cannot_be_sized(self):
        with self.assertRaises(StepSizeError):
            compute_step_sizes({'hi': 0.0, 'x': 0.0, 'z': 0.0}, sigma_ratio=1.0)
        with self.assertRaises(StepSizeError):
            compute_step_sizes({'hi': float('nan'), 'x': 2.0, 'z': 2.0}, sigma_ratio=1.0)


class SolverTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.problem = small_problem()

    def test_zero_data_stays_at_zero(self):
        A = self.problem.A
        problem = ReconstructionProblem(A, np.zeros(A.sinogram_shape))
        image, records = run(problem, small_config(n_iter=20, beta=1.0))
        self.assertFalse(np.any(image.values))
        self.assertEqual(len(records), 20)
        self.assertTrue(all(r.objective_value == 0.0 for r in records))
        self.assertTrue(math.isnan(records[-1].image_rmse))

    def test_iterates_respect_the_dual_bounds_and_nonnegativity(self):
        cfg = small_config(mode='two_channel', filter_lo=FilterSpec('hann_sqrt', 8.0, 16), rho=1.75)
        solver = PDHGSolver(self.problem, cfg)
        state = solver.initial_state()
        for _ in range(60):
            state = solver.step(state)
            self.assertGreaterEqual(state.f.min(), 0.0)
            self.assertLessEqual(np.abs(state.p_x).max(), cfg.alpha_x)
            self.assertLessEqual(np.abs(state.p_z).max(), cfg.alpha_z)
        self.assertLess(solver.steps.stability_product(), 1.0)

    def test_cached_projection_tracks_the_image(self):
        solver = PDHGSolver(self.problem, small_config())
        state = solver.initial_state()
        for _ in range(10):
            state = solver.step(state)
        A = self.problem.A
        self.assertTrue(np.allclose(state.projection_bar, A.forward(state.f_bar), rtol=1e-10, atol=1e-12))

    def test_matched_channels_scale_the_first_ascent(self):
        hann = FilterSpec('hann_sqrt', 4.0, 16)
        single = PDHGSolver(self.problem, small_config(filter_hi=hann))
        double = PDHGSolver(self.problem, small_config(
            mode='two_channel', filter_hi=hann, filter_lo=hann, sigma_ratio=1.0, eps_lo=0.0))
        a_single = single.ascent_sum(single.step(single.initial_state()))
        a_double = double.ascent_sum(double.step(double.initial_state()))
        factor = (double.steps.sigma_hi + double.steps.sigma_lo) / single.steps.sigma_hi
        self.assertTrue(np.allclose(a_double, factor * a_single, rtol=1e-10, atol=1e-14))

    def test_runs_are_bit_identical(self):
        cfg = small_config(mode='two_channel', filter_lo=FilterSpec('hann_sqrt', 8.0, 16), n_iter=30)
        _, first = run(self.problem, cfg)
        _, second = run(self.problem, cfg)
        self.assertEqual([r.as_row() for r in first], [r.as_row() for r in second])

    def test_single_mode_leaves_low_channel_telemetry_empty(self):
        _, records = run(self.problem, small_config(n_iter=3))
        self.assertTrue(math.isnan(records[0].residual_lo_norm))
        self.assertTrue(math.isnan(records[0].slack_lo))
        self.assertEqual([r.iteration for r in records], [1, 2, 3])

    def test_filter_size_must_match_the_detector(self):
        with self.assertRaises(ValueError):
            PDHGSolver(self.problem, small_config(filter_hi=FilterSpec('hann_sqrt', 4.0, 32)))

    def test_divergence_guard(self):
        cfg = small_config(n_iter=5, divergence_factor=1e-6)
        with self.assertRaises(DivergenceError) as ctx:
            run(self.problem, cfg)
        self.assertIsNotNone(ctx.exception.record)

    def test_telemetry_and_checkpoints(self):
        checkpoints = []
        with tempfile.TemporaryDirectory() as tmp:
            with TelemetryWriter(Path(tmp) / 'telemetry.csv') as writer:
                run(self.problem, small_config(n_iter=6, checkpoint_every=3), on_record=writer,
                    on_checkpoint=lambda it, f: checkpoints.append(it))
            rows = read_telemetry(Path(tmp) / 'telemetry.csv')
        self.assertEqual(len(rows), 6)
        self.assertEqual(list(rows[0]), ['iteration', 'image_rmse', 'residual_hi_norm', 'residual_lo_norm',
                                         'objective_value', 'slack_hi', 'slack_lo'])
        self.assertEqual(checkpoints, [3, 6])

    def assert_reaches_linear_programming_optimum(self, **overrides):
        problem = small_problem()
        cfg = small_config(filter_hi=FilterSpec('identity', 4.0, 16), n_iter=40_000, rho=1.75, **overrides)
        image, _ = run(problem, cfg)
        optimum = lp_oracle(problem, cfg.alpha_x, cfg.alpha_z, cfg.beta)
        objective = dtv_value(image, cfg.alpha_x, cfg.alpha_z, cfg.beta)
        self.assertAlmostEqual(objective, optimum, delta=1e-3 * optimum)
        residual = problem.A.forward(image.values) - problem.g
        self.assertLess(np.linalg.norm(residual), 1e-3 * np.linalg.norm(problem.g))

    def test_matches_linear_programming_oracle(self):
        self.assert_reaches_linear_programming_optimum()

    def test_joint_relaxation_matches_linear_programming_oracle(self):
        self.assert_reaches_linear_programming_optimum(relaxation_scope='primal_and_dual')

    def test_joint_relaxation_stays_bounded(self):
        cfg = small_config(mode='two_channel', filter_lo=FilterSpec('hann_sqrt', 8.0, 16), rho=1.75,
                           relaxation_scope='primal_and_dual', n_iter=300)
        image, records = run(self.problem, cfg)
        self.assertGreaterEqual(image.values.min(), 0.0)
        self.assertTrue(all(math.isfinite(r.residual_hi_norm) for r in records))
        self.assertLess(records[-1].residual_hi_norm, records[0].residual_hi_norm)

    def test_joint_relaxation_keeps_no_extrapolated_image(self):
        solver = PDHGSolver(self.problem, small_config(relaxation_scope='primal_and_dual', rho=1.75))
        state = solver.initial_state()
        for _ in range(10):
            state = solver.step(state)
        self.assertTrue(np.array_equal(state.f_bar, state.f))
        self.assertTrue(np.allclose(state.projection, self.problem.A.forward(state.f), rtol=1e-10, atol=1e-12))
