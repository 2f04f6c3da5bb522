# apps/harness/management/commands/project.py
from apps.harness.cli import HarnessCommand, resolution_option
from apps.harness.experiments import prepare_resolution, write_projection


class Command(HarnessCommand):
    help = 'Project the phantom through the fan-beam geometry and write the noiseless sinogram'
    kind = 'project'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--resolution',
            type=int,
            help='Phantom grid size; defaults to the first configured resolution',
        )

    def run_fields(self, experiment, options):
        return {'resolution': resolution_option(experiment, options)}

    def execute_run(self, experiment, run, options):
        out_dir = experiment.output_dir / f'project_{run.resolution}'
        run.output_dir = str(out_dir)

        prepared = prepare_resolution(experiment, run.resolution)
        files = write_projection(experiment, prepared, out_dir)
        run.input_hash = prepared.input_hash

        self.stdout.write(
            f'Sinogram {prepared.sinogram.n_views}x{prepared.sinogram.n_bins} '
            f'({prepared.system.nnz} nonzeros in X)'
        )
        return {'files': files, 'input_hash': prepared.input_hash}
