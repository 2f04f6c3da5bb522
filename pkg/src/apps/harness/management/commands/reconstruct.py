# apps/harness/management/commands/reconstruct.py
from pathlib import Path

from apps.harness.cli import HarnessCommand, resolution_option
from apps.harness.experiments import MODES
from apps.harness.tasks import run_single_reconstruction


class Command(HarnessCommand):
    help = 'Run one single- or two-channel reconstruction with telemetry and checkpoints'
    kind = 'reconstruct'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--mode',
            choices=MODES,
            default='single',
            help='Data-fidelity mode (default: single)',
        )
        parser.add_argument(
            '--resolution',
            type=int,
            help='Grid size; must have a regularization entry',
        )
        parser.add_argument(
            '--iterations',
            type=int,
            help='Override solver.n_iter for this run',
        )
        parser.add_argument(
            '--checkpoint-every',
            type=int,
            help='Write the primal image every K iterations (0 disables)',
        )
        parser.add_argument(
            '--sinogram',
            type=str,
            metavar='BASE',
            help='Reconstruct from BASE.f32/BASE.json instead of projecting the phantom',
        )

    def run_fields(self, experiment, options):
        resolution = resolution_option(experiment, options)
        # Fails here, before any work, when the mode cannot be configured
        experiment.solver_for(resolution, options['mode'])
        if options.get('iterations') is not None and options['iterations'] < 1:
            raise ValueError(f"--iterations must be >= 1, got {options['iterations']}")
        if options.get('checkpoint_every') is not None and options['checkpoint_every'] < 0:
            raise ValueError(f"--checkpoint-every must be >= 0, got {options['checkpoint_every']}")
        if options.get('sinogram') and not Path(options['sinogram']).with_suffix('.json').exists():
            raise ValueError(f"No sinogram sidecar at {options['sinogram']}.json")
        return {'resolution': resolution, 'mode': options['mode']}

    def execute_run(self, experiment, run, options):
        out_dir = experiment.output_dir / f'reconstruct_{run.resolution}_{run.mode}'
        run.output_dir = str(out_dir)

        result = run_single_reconstruction.apply_async(
            args=(experiment.raw, run.resolution, run.mode, str(out_dir)),
            kwargs={
                'n_iter': options.get('iterations'),
                'checkpoint_every': options.get('checkpoint_every'),
                'sinogram_path': options.get('sinogram'),
            },
        ).get(disable_sync_subtasks=False)

        run.final_rmse = result['rmse']
        run.input_hash = result['input_hash']
        self.stdout.write(f"{run.mode} at {run.resolution}: final RMSE {result['rmse']:.6f}")
        return result
