# apps/harness/management/commands/spectrum.py
from apps.harness.cli import HarnessCommand
from apps.harness.experiments import run_spectrum
from apps.metrics.spectrum import DIRECTIONS


class Command(HarnessCommand):
    help = 'Measure how much of each cosine mode survives filtered projection'
    kind = 'spectrum'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--resolution', type=int, help='Grid size (default: spectrum.resolution)')
        parser.add_argument('--direction', choices=DIRECTIONS, help='Mode direction (default: spectrum.direction)')
        parser.add_argument('--modes', type=int, nargs='+', help='Mode indices k to measure')

    def run_fields(self, experiment, options):
        resolution = options.get('resolution') or experiment.spectrum.resolution
        modes = options.get('modes') or experiment.spectrum.modes
        if resolution < 8:
            raise ValueError(f'resolution must be at least 8, got {resolution}')
        if any(k < 0 or k > resolution // 2 for k in modes):
            raise ValueError(f'modes must lie in [0, {resolution // 2}], got {list(modes)}')
        return {'resolution': resolution}

    def execute_run(self, experiment, run, options):
        direction = options.get('direction') or experiment.spectrum.direction
        out_dir = experiment.output_dir / f'spectrum_{run.resolution}_{direction}'
        run.output_dir = str(out_dir)

        profiles = run_spectrum(experiment, out_dir, resolution=run.resolution, direction=direction,
                                modes=options.get('modes'))

        slugs = list(profiles)
        self.stdout.write(f"{'k':>4}  " + '  '.join(f'{slug:>18}' for slug in slugs))
        first = profiles[slugs[0]]
        for i, k in enumerate(first.frequencies):
            self.stdout.write(f'{int(k):>4}  ' + '  '.join(f'{profiles[s].gains[i]:>18.6f}' for s in slugs))
        return {
            'direction': direction,
            'profiles': {slug: dict(zip(map(int, p.frequencies), map(float, p.gains))) for slug, p in profiles.items()},
        }
