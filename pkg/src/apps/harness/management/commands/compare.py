# apps/harness/management/commands/compare.py
from celery import group

from apps.harness.cli import HarnessCommand
from apps.harness.experiments import write_comparison_report
from apps.harness.tasks import run_resolution_pair


class Command(HarnessCommand):
    help = 'Compare single- and two-channel reconstructions across resolutions'
    kind = 'compare'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--resolutions',
            type=int,
            nargs='+',
            help='Subset of the configured resolutions to run',
        )

    def selected_resolutions(self, experiment, options):
        chosen = options.get('resolutions') or list(experiment.resolutions)
        unknown = [n for n in chosen if n not in experiment.regularization]
        if unknown:
            raise ValueError(f'No regularization entry for resolution(s) {unknown}')
        return sorted(set(chosen))

    def run_fields(self, experiment, options):
        resolutions = self.selected_resolutions(experiment, options)
        for n in resolutions:
            experiment.solver_for(n, 'two_channel')
        return {'mode': 'both', 'resolution': resolutions[0] if len(resolutions) == 1 else None}

    def execute_run(self, experiment, run, options):
        resolutions = self.selected_resolutions(experiment, options)
        out_dir = experiment.output_dir
        run.output_dir = str(out_dir / 'compare')

        # Each resolution pair is independent; the group fans them out over workers
        job = group(
            run_resolution_pair.s(experiment.raw, n, str(out_dir / 'compare' / f'res_{n}'))
            for n in resolutions
        )
        rows = job.apply_async().join(disable_sync_subtasks=False)

        report = write_comparison_report(experiment, rows, out_dir / 'compare')
        self.print_table(report.rows)
        if len(report.rows) == 1:
            run.input_hash = report.rows[0]['input_hash']
        return {'rows': report.rows, 'files': report.files}

    def print_table(self, rows):
        self.stdout.write(f"{'n':>6}  {'single':>12}  {'two-channel':>12}  {'gain %':>7}")
        self.stdout.write('-' * 44)
        for row in rows:
            self.stdout.write(
                f"{row['resolution']:>6}  {row['rmse_single']:>12.6f}  "
                f"{row['rmse_two']:>12.6f}  {row['improvement_percent']:>7.1f}"
            )
