"""
Run an experiment preset from a TOML spec.

Usage:
    python manage.py experiment specs/modality.toml --out reports/modality

Spec example:
    preset = "modality_ablation"
    seeds = [0, 1, 2]

    [data]
    n_objects = 20
    episodes_per_object = 6

    [train]
    epochs = 15
    lr = 1e-3
"""

import time
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from slipdetect.exceptions import SlipDetectError
from slipdetect.experiments import ExperimentService, load_experiment_spec


class Command(BaseCommand):
    help = "Run seq_len_sweep, modality_ablation, arch_comparison or stiffness_probe and write CSV reports"

    def add_arguments(self, parser):
        parser.add_argument("spec", type=str, help="Experiment spec (TOML)")
        parser.add_argument("--out", type=str, default=None, help="Report directory (default: SLIPNET_REPORT_ROOT/<name>)")

    def handle(self, *args, **options):
        start_time = time.perf_counter()
        try:
            spec = load_experiment_spec(options["spec"])
            out = Path(options["out"] or Path(getattr(settings, "SLIPNET_REPORT_ROOT", "reports")) / spec.name)
            self.stdout.write(f"Running {spec.preset} ({len(spec.seeds)} seed(s)) into {out}")
            report = ExperimentService.run(spec, out)
        except SlipDetectError as exc:
            raise CommandError(exc.as_line()) from exc

        for variant, values in report.mean_metrics().items():
            self.stdout.write(
                f"variant={variant} "
                + " ".join(f"{name}={value:.6f}" for name, value in values.items())
            )
        for path in report.files:
            self.stdout.write(f"wrote {path}")
        elapsed = time.perf_counter() - start_time
        self.stdout.write(self.style.SUCCESS(f"Experiment {spec.name} finished in {elapsed:.2f}s"))
