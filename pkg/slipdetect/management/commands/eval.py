"""
Evaluate a checkpoint on a dataset split.

Usage:
    python manage.py eval --checkpoint runs/fused/checkpoint.ckpt --data data/synth
    python manage.py eval --checkpoint ... --data ... --split all --out reports/fused
"""

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from slipdetect.checkpoint import load_checkpoint
from slipdetect.dataset import load_dataset, make_windows
from slipdetect.exceptions import InputValidationError, SlipDetectError
from slipdetect.experiments import ReportWriter
from slipdetect.services import EvaluationService, default_calibration

SPLITS = ["test", "train", "all"]


class Command(BaseCommand):
    help = "Evaluate a saved checkpoint on the train, test or all objects of a dataset"

    def add_arguments(self, parser):
        parser.add_argument("--checkpoint", type=str, required=True, help="Checkpoint file")
        parser.add_argument("--data", type=str, required=True, help="Dataset root")
        parser.add_argument("--split", choices=SPLITS, default="test", help="Objects to evaluate on")
        parser.add_argument("--stride", type=int, default=1, help="Window stride")
        parser.add_argument("--out", type=str, default=None, help="Write metrics/confusion/per_object CSVs here")

    def handle(self, *args, **options):
        try:
            checkpoint = load_checkpoint(options["checkpoint"])
            loaded = load_dataset(options["data"], workers=getattr(settings, "SLIPNET_LOAD_WORKERS", 4))
            if options["split"] == "all":
                episodes = loaded.episodes
            else:
                wanted = set(loaded.objects(options["split"]))
                episodes = [ep for ep in loaded.episodes if ep.object_id in wanted]
            if not episodes:
                raise InputValidationError(f"no episodes in split {options['split']!r}")

            calibration = default_calibration()
            windows = [
                window
                for ep in episodes
                for window in make_windows(ep, checkpoint.config.seq_len, options["stride"], calibration)
            ]
            report = EvaluationService.evaluate(checkpoint, windows)
            if options["out"]:
                for path in ReportWriter.write_evaluation(options["out"], report, label=options["split"]):
                    self.stdout.write(f"wrote {path}")
        except SlipDetectError as exc:
            raise CommandError(exc.as_line()) from exc

        for name in ("accuracy", "precision", "recall", "f1"):
            self.stdout.write(f"{name}={getattr(report, name):.6f}")
        self.stdout.write(f"windows={report.count}")
        self.stdout.write(self.style.SUCCESS(f"Evaluated {options['split']} split"))
