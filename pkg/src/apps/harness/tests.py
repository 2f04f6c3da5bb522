import csv
import json
import math
import os
import tempfile
import unittest
from io import StringIO
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from apps.geometry.storage import load_image, read_sidecar
from apps.phantom.generator import downsample_consistent

from .cli import RUNTIME_EXIT, VALIDATION_EXIT, json_safe
from .config import apply_overrides, parse_override, resolve_output_dir
from .forms import build_experiment, load_experiment
from .models import ExperimentRun, SystemLog

RUN_SLOW = bool(os.environ.get('TOMO_RUN_SLOW_TESTS'))


def tiny_study():
    """A study small enough to run every command in a few seconds"""
    return {
        'seed': 7,
        'output_dir': 'tiny',
        'resolutions': [16],
        'regularization': {'16': {'alpha': 0.1, 'beta': 0.05}},
        'geometry': {'n_views': 5, 'n_detector_bins': 32},
        'phantom': {'n_calcifications': 2, 'calc_radius_px': [1, 1]},
        'filters': {
            'hi': {'kind': 'hann_sqrt', 'cutoff_param': 4.0},
            'lo': {'kind': 'hann_sqrt', 'cutoff_param': 8.0},
        },
        'solver': {'n_iter': 5, 'power_iters': 20, 'log_every': 1},
        'spectrum': {'resolution': 16, 'modes': [0, 1, 2, 4]},
        'oscillation_window': [1, 4],
    }


def read_rows(path):
    with Path(path).open(newline='', encoding='utf-8') as handle:
        return list(csv.DictReader(handle))


class HarnessCommandTestCase(TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.config_path = self.tmp / 'study.json'
        self.config_path.write_text(json.dumps(tiny_study()), encoding='utf-8')
        self._settings = override_settings(TOMO_OUTPUT_ROOT=self.tmp / 'runs')
        self._settings.enable()

    def tearDown(self):
        self._settings.disable()
        self._tmp.cleanup()

    def run_command(self, name, *args):
        call_command(name, '--config', str(self.config_path), *args, stdout=StringIO())
        return ExperimentRun.objects.filter(kind=name).order_by('-created_at').first()

    def assertExitCode(self, code, name, *args):
        with self.assertRaises(CommandError) as cm:
            self.run_command(name, *args)
        self.assertEqual(cm.exception.returncode, code)
        return cm.exception


class PhantomCommandTests(HarnessCommandTestCase):

    def test_writes_image_labels_and_sidecars(self):
        run = self.run_command('phantom')
        out = Path(run.output_dir)
        self.assertEqual(out, self.tmp / 'runs' / 'tiny' / 'phantom_16')
        for name in ('phantom.f32', 'phantom.json', 'labels.u8', 'labels.json'):
            self.assertTrue((out / name).exists(), name)
        self.assertEqual(len((out / 'labels.u8').read_bytes()), 16 * 16)

        meta = read_sidecar(out / 'phantom.json')
        self.assertEqual(meta['config']['seed'], 7)
        self.assertEqual(len(meta['sha256']), 64)
        self.assertTrue(set(np.unique(load_image(out / 'phantom').values)) <= {0.5, 1.0, 2.0})
        self.assertEqual(run.status, 'completed')
        self.assertEqual(run.resolution, 16)

    def test_repeat_is_byte_identical(self):
        out = Path(self.run_command('phantom').output_dir)
        first = {p.name: p.read_bytes() for p in out.iterdir()}
        self.run_command('phantom')
        second = {p.name: p.read_bytes() for p in out.iterdir()}
        self.assertEqual(first, second)

    def test_invalid_glandular_fraction_is_a_validation_error(self):
        error = self.assertExitCode(VALIDATION_EXIT, 'phantom', '--set', 'phantom.glandular_fraction=1.5')
        self.assertIn('Glandular fraction', str(error))
        self.assertFalse(ExperimentRun.objects.exists())
        self.assertTrue(SystemLog.objects.filter(action_type='validation_error', level='ERROR').exists())

    def test_missing_config_file_is_a_validation_error(self):
        with self.assertRaises(CommandError) as cm:
            call_command('phantom', '--config', str(self.tmp / 'absent.json'))
        self.assertEqual(cm.exception.returncode, VALIDATION_EXIT)

    def test_output_flag_redirects_files(self):
        run = self.run_command('phantom', '--output', 'elsewhere')
        self.assertEqual(Path(run.output_dir), self.tmp / 'runs' / 'elsewhere' / 'phantom_16')


class ProjectCommandTests(HarnessCommandTestCase):

    def test_writes_sinogram_with_input_hash(self):
        run = self.run_command('project')
        out = Path(run.output_dir)
        raw = (out / 'sinogram.f32').read_bytes()
        self.assertEqual(len(raw), 5 * 32 * 4)
        meta = read_sidecar(out / 'sinogram.json')
        self.assertEqual(meta['n_views'], 5)
        self.assertEqual(meta['input_hash'], run.input_hash)
        self.assertEqual(meta['noise'], 'none')


class ReconstructCommandTests(HarnessCommandTestCase):

    def test_single_iteration_gives_one_telemetry_row(self):
        run = self.run_command('reconstruct', '--mode', 'single', '--iterations', '1')
        rows = read_rows(Path(run.output_dir) / 'telemetry_single.csv')
        self.assertEqual(len(rows), 1)
        self.assertEqual(rows[0]['iteration'], '1')
        self.assertTrue(math.isnan(float(rows[0]['residual_lo_norm'])))
        self.assertIsNotNone(run.final_rmse)
        self.assertEqual(run.mode, 'single')

    def test_two_channel_writes_image_png_and_checkpoints(self):
        run = self.run_command('reconstruct', '--mode', 'two_channel', '--checkpoint-every', '2')
        out = Path(run.output_dir)
        self.assertEqual(len(read_rows(out / 'telemetry_two_channel.csv')), 5)
        self.assertTrue((out / 'reconstruction_two_channel.f32').exists())
        self.assertTrue((out / 'reconstruction_two_channel.png').exists())
        self.assertTrue((out / 'reconstruction_two_channel.png.json').exists())
        checkpoints = sorted(p.name for p in (out / 'checkpoints').glob('*.f32'))
        self.assertEqual(checkpoints, ['two_channel_iter_00002.f32', 'two_channel_iter_00004.f32'])
        self.assertGreaterEqual(load_image(out / 'reconstruction_two_channel').values.min(), 0.0)

    def test_two_channel_without_low_filter_is_a_validation_error(self):
        self.assertExitCode(VALIDATION_EXIT, 'reconstruct', '--mode', 'two_channel', '--set', 'filters.lo=null')
        self.assertFalse(ExperimentRun.objects.filter(kind='reconstruct').exists())

    def test_unknown_resolution_is_a_validation_error(self):
        self.assertExitCode(VALIDATION_EXIT, 'reconstruct', '--resolution', '32')

    def test_reads_a_projected_sinogram(self):
        projected = self.run_command('project')
        run = self.run_command('reconstruct', '--iterations', '2',
                               '--sinogram', str(Path(projected.output_dir) / 'sinogram'))
        self.assertEqual(run.status, 'completed')
        self.assertEqual(len(run.input_hash), 64)
        meta = read_sidecar(Path(run.output_dir) / 'reconstruction_single.json')
        self.assertEqual(meta['input_hash'], run.input_hash)

    def test_divergence_is_a_runtime_error_with_last_record(self):
        self.assertExitCode(RUNTIME_EXIT, 'reconstruct', '--set', 'solver.divergence_factor=1e-6')
        run = ExperimentRun.objects.get(kind='reconstruct')
        self.assertEqual(run.status, 'failed')
        log = SystemLog.objects.get(action_type='solver_error', run=run)
        self.assertIn('iteration', log.metadata['last_record'])

    def test_identical_runs_give_identical_telemetry(self):
        first = self.run_command('reconstruct', '--mode', 'two_channel')
        telemetry = (Path(first.output_dir) / 'telemetry_two_channel.csv').read_bytes()
        second = self.run_command('reconstruct', '--mode', 'two_channel')
        self.assertEqual((Path(second.output_dir) / 'telemetry_two_channel.csv').read_bytes(), telemetry)


class CompareCommandTests(HarnessCommandTestCase):

    def test_report_rows_match_recomputed_improvement(self):
        run = self.run_command('compare')
        out = Path(run.output_dir)
        rows = read_rows(out / 'report.csv')
        self.assertEqual(list(rows[0]), ['resolution', 'rmse_single', 'rmse_two', 'improvement_percent'])
        self.assertEqual(rows[0]['resolution'], '16')
        single, two = float(rows[0]['rmse_single']), float(rows[0]['rmse_two'])
        self.assertAlmostEqual(float(rows[0]['improvement_percent']), 100 * (single - two) / single, delta=0.05)

        report = read_sidecar(out / 'report.json')
        self.assertEqual(report['rows'][0]['input_hash'], run.input_hash)
        sidecar = read_sidecar(out / 'report.csv.json')
        self.assertEqual(sidecar['input_hashes'], {'16': run.input_hash})
        self.assertEqual(run.mode, 'both')

        res_dir = out / 'res_16'
        for name in ('sinogram.f32', 'difference_single.png', 'difference_two_channel.png',
                     'convergence_single.csv', 'telemetry_two_channel.csv'):
            self.assertTrue((res_dir / name).exists(), name)

    def test_repeat_produces_identical_report_and_images(self):
        out = Path(self.run_command('compare').output_dir)
        names = ['report.csv', 'report.json', 'res_16/reconstruction_single.png',
                 'res_16/reconstruction_two_channel.f32', 'res_16/difference_two_channel.png']
        first = {name: (out / name).read_bytes() for name in names}
        self.run_command('compare')
        for name in names:
            self.assertEqual((out / name).read_bytes(), first[name], name)

    def test_records_provenance(self):
        run = self.run_command('compare')
        self.assertEqual(run.status, 'completed')
        self.assertIsNotNone(run.completed_at)
        self.assertEqual(run.config['resolutions'], [16])
        self.assertEqual(len(run.summary['rows']), 1)
        messages = list(SystemLog.objects.filter(run=run).values_list('message', flat=True))
        self.assertIn('compare started', messages)
        self.assertIn('compare completed', messages)


class SpectrumCommandTests(HarnessCommandTestCase):

    def test_three_profiles_with_weighted_below_unweighted(self):
        run = self.run_command('spectrum')
        out = Path(run.output_dir)
        self.assertEqual(out.name, 'spectrum_16_x')
        profiles = sorted(p.name for p in out.glob('profile_*.csv'))
        self.assertEqual(profiles, ['profile_hann_sqrt_c4.csv', 'profile_hann_sqrt_c8.csv', 'profile_identity.csv'])

        plain = [float(r['gain']) for r in read_rows(out / 'profile_identity.csv')]
        for name in ('profile_hann_sqrt_c4.csv', 'profile_hann_sqrt_c8.csv'):
            weighted = [float(r['gain']) for r in read_rows(out / name)]
            self.assertEqual(len(weighted), len(plain))
            for w, p in zip(weighted, plain):
                self.assertLessEqual(w, p + 1e-12)
        self.assertEqual(len(read_rows(out / 'response_identity.csv')), 32)

    def test_z_direction_and_explicit_modes(self):
        run = self.run_command('spectrum', '--direction', 'z', '--modes', '0', '3')
        rows = read_rows(Path(run.output_dir) / 'profile_identity.csv')
        self.assertEqual([r['mode'] for r in rows], ['0', '3'])

    def test_mode_above_nyquist_is_a_validation_error(self):
        self.assertExitCode(VALIDATION_EXIT, 'spectrum', '--modes', '9')


class StudyConfigTests(SimpleTestCase):

    def test_override_values_are_json_with_string_fallback(self):
        self.assertEqual(parse_override('solver.n_iter=100'), (['solver', 'n_iter'], 100))
        self.assertEqual(parse_override('filters.lo=null'), (['filters', 'lo'], None))
        self.assertEqual(parse_override('solver.boundary=periodic'), (['solver', 'boundary'], 'periodic'))
        self.assertEqual(parse_override('resolutions=[64]'), (['resolutions'], [64]))

    def test_malformed_overrides_are_rejected(self):
        with self.assertRaises(ValidationError):
            parse_override('solver.n_iter')
        with self.assertRaises(ValidationError):
            parse_override('solver..n_iter=3')

    def test_overrides_do_not_touch_the_input(self):
        data = {'solver': {'n_iter': 500}}
        merged = apply_overrides(data, ['solver.n_iter=3', 'phantom.sharing=downsample'])
        self.assertEqual(data, {'solver': {'n_iter': 500}})
        self.assertEqual(merged['solver']['n_iter'], 3)
        self.assertEqual(merged['phantom'], {'sharing': 'downsample'})

    @override_settings(TOMO_OUTPUT_ROOT=Path('/tmp/tomo-root'))
    def test_relative_output_dir_is_placed_under_the_root(self):
        self.assertEqual(resolve_output_dir('study'), Path('/tmp/tomo-root/study'))
        self.assertEqual(resolve_output_dir('/abs/path'), Path('/abs/path'))

    def test_shipped_config_builds_the_default_study(self):
        experiment = load_experiment(settings.TOMO_DEFAULT_CONFIG)
        self.assertEqual(experiment.resolutions, (128, 256, 512))
        self.assertEqual(experiment.regularization[512], (1.7, 1.7, 5.0))
        self.assertEqual(experiment.phantom.n_pixels, 512)
        self.assertEqual(experiment.geometry.n_views, 25)
        self.assertEqual(experiment.solver.filter_lo.cutoff_param, 8.0)
        cfg = experiment.solver_for(128, 'two_channel')
        self.assertEqual((cfg.alpha_x, cfg.beta, cfg.mode), (1.95, 10.0, 'two_channel'))
        self.assertAlmostEqual(cfg.eps_lo, 1.25e-5)

    def test_shipped_config_uses_joint_relaxation(self):
        experiment = load_experiment(settings.TOMO_DEFAULT_CONFIG)
        cfg = experiment.solver_for(128, 'two_channel')
        self.assertEqual((cfg.rho, cfg.relaxation_scope), (1.75, 'primal_and_dual'))

    def test_shipped_phantom_draws_small_specks_at_256(self):
        experiment = load_experiment(settings.TOMO_DEFAULT_CONFIG)
        self.assertEqual(experiment.phantom.calc_radius_px, (2, 4))
        phantom = downsample_consistent(experiment.phantom, 256, method=experiment.phantom_sharing)
        self.assertEqual(phantom.spec.calc_radius_px, (1, 2))

    def test_separate_alpha_per_direction(self):
        data = tiny_study()
        data['regularization'] = {'16': {'alpha_x': 0.2, 'alpha_z': 0.3, 'beta': 0.0}}
        self.assertEqual(build_experiment(data).regularization[16], (0.2, 0.3, 0.0))

    def test_invalid_studies_are_rejected(self):
        cases = [
            {'regularization': {}},
            {'resolutions': []},
            {'solver': {'rho': 2.5}},
            {'filters': {'hi': {'kind': 'hann_sqrt', 'cutoff_param': -1}}},
            {'geometry': {'detector_mode': 'spiral'}},
            {'spectrum': {'modes': [-1]}},
            {'oscillation_window': [200, 50]},
        ]
        for change in cases:
            data = {**tiny_study(), **change}
            with self.subTest(change=change), self.assertRaises(ValidationError):
                build_experiment(data)

    def test_json_safe_replaces_non_finite_floats(self):
        self.assertEqual(json_safe({'a': float('nan'), 'b': [1.0, float('inf')], 3: 'x'}),
                         {'a': None, 'b': [1.0, None], '3': 'x'})


@unittest.skipUnless(RUN_SLOW, 'set TOMO_RUN_SLOW_TESTS=1 to run the full-size study')
class DefaultStudyTests(TestCase):
    """Directional checks on the shipped study; minutes to tens of minutes"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._tmp = tempfile.TemporaryDirectory()
        cls._settings = override_settings(TOMO_OUTPUT_ROOT=Path(cls._tmp.name))
        cls._settings.enable()

    @classmethod
    def tearDownClass(cls):
        cls._settings.disable()
        cls._tmp.cleanup()
        super().tearDownClass()

    def compare(self, *resolutions):
        call_command('compare', '--resolutions', *map(str, resolutions), stdout=StringIO())
        run = ExperimentRun.objects.filter(kind='compare').first()
        return {row['resolution']: row for row in run.summary['rows']}

    def test_coarse_grid_two_channel_gains_at_least_twenty_percent(self):
        row = self.compare(128)[128]
        self.assertGreaterEqual(row['improvement_percent'], 20.0)
        self.assertEqual(len(read_rows(Path(settings.TOMO_OUTPUT_ROOT) / 'default_study' / 'compare'
                                       / 'res_128' / 'telemetry_single.csv')), 500)

    def test_improvement_shrinks_with_finer_grid_and_oscillation_drops(self):
        rows = self.compare(128, 256)
        self.assertLess(rows[256]['rmse_two'], rows[256]['rmse_single'])
        self.assertGreater(rows[128]['improvement_percent'], rows[256]['improvement_percent'])
        self.assertLess(rows[256]['oscillation_two'], rows[256]['oscillation_single'])
