"""
Show experiment results.

Usage:
    python manage.py report --run-dir reports/modality     # metrics table of one experiment
    python manage.py report --runs --preset arch_comparison  # recorded runs
"""

import csv
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from slipdetect.exceptions import DataError, UsageError
from slipdetect.models import TrainingRun


class Command(BaseCommand):
    help = "Print the metric table of an experiment directory or list recorded runs"

    def add_arguments(self, parser):
        parser.add_argument("--run-dir", type=str, default=None, help="Experiment report directory")
        parser.add_argument("--runs", action="store_true", help="List runs from the run ledger")
        parser.add_argument("--preset", type=str, default=None, help="Filter --runs by preset")
        parser.add_argument("--limit", type=int, default=20, help="Max runs listed")

    def handle(self, *args, **options):
        if not options["run_dir"] and not options["runs"]:
            raise CommandError(UsageError("give --run-dir or --runs").as_line())
        if options["run_dir"]:
            self._print_tables(Path(options["run_dir"]))
        if options["runs"]:
            self._print_runs(options["preset"], options["limit"])

    def _print_tables(self, run_dir: Path):
        names = ["table.csv", "metrics.csv"]
        found = [run_dir / name for name in names if (run_dir / name).exists()]
        if not found:
            raise CommandError(DataError(f"no {' or '.join(names)} in {run_dir}", path=str(run_dir)).as_line())
        with open(found[0], newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        widths = [max(len(row[i]) for row in rows if i < len(row)) for i in range(len(rows[0]))]
        for row in rows:
            self.stdout.write("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())

    def _print_runs(self, preset, limit: int):
        runs = TrainingRun.objects.prefetch_related("evaluations").order_by("-created_at", "-id")
        if preset:
            runs = runs.filter(preset=preset)
        runs = list(runs[:limit])
        if not runs:
            self.stdout.write(self.style.WARNING("No recorded runs."))
            return
        for run in runs:
            evaluation = next(iter(run.evaluations.all()), None)
            scores = "-" if evaluation is None else f"accuracy={evaluation.accuracy:.4f} f1={evaluation.f1:.4f}"
            self.stdout.write(
                f"{run.id} {run.name} variant={run.variant} seed={run.seed} epochs={run.epochs_run} {scores}"
            )
