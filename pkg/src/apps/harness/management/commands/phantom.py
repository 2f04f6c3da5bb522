# apps/harness/management/commands/phantom.py
from apps.harness.cli import HarnessCommand, resolution_option
from apps.harness.experiments import phantom_for, write_phantom
from apps.phantom.generator import CALCIFICATION, FIBROGLANDULAR


class Command(HarnessCommand):
    help = 'Generate the breast phantom for one grid size and write it with its label map'
    kind = 'phantom'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--resolution',
            type=int,
            help='Grid size n (n x n pixels); defaults to the first configured resolution',
        )

    def run_fields(self, experiment, options):
        return {'resolution': resolution_option(experiment, options)}

    def execute_run(self, experiment, run, options):
        out_dir = experiment.output_dir / f'phantom_{run.resolution}'
        run.output_dir = str(out_dir)

        phantom = phantom_for(experiment, run.resolution)
        files = write_phantom(experiment, phantom, out_dir)

        glandular = phantom.label_fraction(FIBROGLANDULAR)
        self.stdout.write(
            f'Phantom {run.resolution}x{run.resolution}: '
            f'glandular fraction {glandular:.3f}, '
            f'{int((phantom.labels == CALCIFICATION).sum())} calcification pixels'
        )
        return {'files': files, 'glandular_fraction': glandular}
