# apps/harness/cli.py
"""Shared plumbing for the harness management commands.

Exit codes: 0 success, 1 invalid configuration, 2 runtime or solver failure.
"""
import logging
import math
import traceback

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from apps.solver.exceptions import SolverError

from .forms import load_experiment
from .models import ExperimentRun, SystemLog

logger = logging.getLogger(__name__)

VALIDATION_EXIT = 1
RUNTIME_EXIT = 2


def json_safe(value):
    """Replace non-finite floats so values fit a JSON column"""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def resolution_option(experiment, options):
    """``--resolution`` if given, else the first configured resolution"""
    resolution = options.get('resolution') or experiment.resolutions[0]
    if resolution < 8:
        raise ValueError(f'resolution must be at least 8, got {resolution}')
    return resolution


def _messages(exc):
    if isinstance(exc, ValidationError):
        return '; '.join(exc.messages)
    return str(exc)


class HarnessCommand(BaseCommand):
    kind = None

    def add_arguments(self, parser):
        parser.add_argument(
            '--config',
            type=str,
            help='Study configuration file (JSON); defaults to TOMO_DEFAULT_CONFIG',
        )
        parser.add_argument(
            '--set',
            action='append',
            default=[],
            metavar='KEY=VALUE',
            dest='overrides',
            help='Override one configuration key, e.g. --set solver.n_iter=100 (repeatable)',
        )
        parser.add_argument(
            '--output',
            type=str,
            help='Output directory; relative paths are placed under TOMO_OUTPUT_ROOT',
        )

    def run_fields(self, experiment, options):
        """Extra ExperimentRun fields known before the run starts"""
        return {}

    def execute_run(self, experiment, run, options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            experiment = load_experiment(options.get('config'), options.get('overrides'), options.get('output'))
            fields = self.run_fields(experiment, options)
        except (ValidationError, ValueError) as e:
            message = _messages(e)
            SystemLog.record('validation_error', f'{self.kind}: {message}', level='ERROR',
                             overrides=options.get('overrides'))
            raise CommandError(f'Invalid configuration: {message}', returncode=VALIDATION_EXIT)

        run = ExperimentRun.objects.create(kind=self.kind, config=json_safe(experiment.raw), **fields)
        run.mark_running()
        SystemLog.record('command', f'{self.kind} started', run=run, overrides=options.get('overrides'))

        try:
            summary = self.execute_run(experiment, run, options)
        except (ValidationError, ValueError) as e:
            self.fail(run, e, 'validation_error')
            raise CommandError(f'Invalid configuration: {_messages(e)}', returncode=VALIDATION_EXIT)
        except SolverError as e:
            self.fail(run, e, 'solver_error')
            raise CommandError(f'Solver failed: {str(e)}', returncode=RUNTIME_EXIT)
        except Exception as e:
            self.fail(run, e, 'system_error')
            raise CommandError(f'{self.kind} failed: {str(e)}', returncode=RUNTIME_EXIT)

        run.mark_completed(summary=json_safe(summary or {}))
        SystemLog.record('command', f'{self.kind} completed', run=run)
        self.stdout.write(self.style.SUCCESS(f'{self.kind} completed; outputs in {run.output_dir}'))

    def fail(self, run, exc, action_type):
        message = _messages(exc)
        logger.error(f'{self.kind} run {run.id} failed: {message}')
        run.mark_failed(message)
        metadata = {'exception': type(exc).__name__}
        record = getattr(exc, 'record', None)
        if record is not None:
            metadata['last_record'] = json_safe(dict(record.__dict__))
        if action_type == 'system_error':
            metadata['traceback'] = traceback.format_exc()
        SystemLog.record(action_type, message, level='ERROR', run=run, **json_safe(metadata))
        self.stdout.write(self.style.ERROR(f'{self.kind} failed: {message}'))
