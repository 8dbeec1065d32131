"""
Train one slip detector.

Usage:
    python manage.py train --data data/synth --out runs/fused --lr 1e-3 --epochs 20
    python manage.py train --data data/real --out runs/tactile --modality tactile_only

The learning rate defaults to SLIPNET_RECORDED_LR (1e-7), the value
for real recordings; short synthetic runs want something like 1e-3.
"""

import time
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from slipdetect.encoders import VISUAL_MODES
from slipdetect.exceptions import InputValidationError, SlipDetectError
from slipdetect.experiments import ExperimentService
from slipdetect.dataset import load_dataset, split_by_object
from slipdetect.network import ARCHITECTURES, MODALITIES, READOUTS, build_model_config
from slipdetect.services import EvaluationService, RunLedger, TrainConfig, TrainingService, default_calibration


class Command(BaseCommand):
    help = "Train a CNN-MSTCN (or CNN-TCN) slip detector on a dataset directory"

    def add_arguments(self, parser):
        parser.add_argument("--data", type=str, required=True, help="Dataset root (manifest.json + episodes)")
        parser.add_argument("--out", type=str, required=True, help="Directory for checkpoint and history")
        parser.add_argument("--lr", type=float, default=None, help="Adam learning rate (default: SLIPNET_RECORDED_LR)")
        parser.add_argument("--batch-size", type=int, default=8)
        parser.add_argument("--epochs", type=int, default=10)
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--seq-len", type=int, default=13, help="Window length T")
        parser.add_argument("--stride", type=int, default=1, help="Window stride")
        parser.add_argument("--modality", choices=MODALITIES, default="fused")
        parser.add_argument("--arch", choices=ARCHITECTURES, default="mstcn")
        parser.add_argument("--readout", choices=READOUTS, default="last")
        parser.add_argument("--visual-mode", choices=VISUAL_MODES, default="embedding_passthrough")
        parser.add_argument("--visual-frozen", action="store_true", help="Keep visual encoder weights fixed")
        parser.add_argument("--early-stop-patience", type=int, default=None)
        parser.add_argument("--target-train-accuracy", type=float, default=None)
        parser.add_argument("--checkpoint-every", type=int, default=0, help="Also save every N epochs (0: off)")
        parser.add_argument("--val-objects", type=int, default=0, help="Training objects held out for validation")
        parser.add_argument("--name", type=str, default="", help="Name recorded in the run ledger")

    def handle(self, *args, **options):
        out = Path(options["out"])
        start_time = time.perf_counter()
        try:
            loaded = load_dataset(options["data"], workers=getattr(settings, "SLIPNET_LOAD_WORKERS", 4))
            if not loaded.episodes:
                raise InputValidationError(f"no usable episodes under {options['data']}")
            for error in loaded.errors:
                self.stderr.write(error.as_line())
            train_objects, test_objects = ExperimentService.object_split(loaded)

            visual = ExperimentService.visual_spec(options["visual_mode"], loaded.episodes)
            model_config = build_model_config(
                options["modality"],
                options["arch"],
                options["seq_len"],
                visual=visual,
                visual_frozen=options["visual_frozen"],
                readout=options["readout"],
            )
            train_config = TrainConfig(
                lr=options["lr"] if options["lr"] is not None else getattr(settings, "SLIPNET_RECORDED_LR", 1e-7),
                batch_size=options["batch_size"],
                epochs=options["epochs"],
                seed=options["seed"],
                seq_len=options["seq_len"],
                modality=options["modality"],
                early_stop_patience=options["early_stop_patience"],
                target_train_accuracy=options["target_train_accuracy"],
                checkpoint_every=options["checkpoint_every"],
            )
            train_windows, test_windows = split_by_object(
                loaded.episodes, train_objects, test_objects, options["seq_len"], options["stride"], default_calibration()
            )
            fit, val = ExperimentService.hold_out(
                train_windows, train_objects, options["val_objects"], options["seed"]
            )
            result = TrainingService.train(model_config, train_config, fit, val, checkpoint_dir=out)
            run = RunLedger.record_run(options["name"] or out.name, result, report_dir=out)
            report = None
            if test_windows:
                report = EvaluationService.evaluate(result.model(), test_windows)
                RunLedger.record_evaluation(run, report)
        except SlipDetectError as exc:
            raise CommandError(exc.as_line()) from exc

        elapsed = time.perf_counter() - start_time
        self.stdout.write(f"checkpoint={result.checkpoint_path}")
        self.stdout.write(f"epochs_run={result.epochs_run} best_epoch={result.best_epoch}")
        if report is not None:
            self.stdout.write(
                f"test_accuracy={report.accuracy:.6f} test_f1={report.f1:.6f} windows={report.count}"
            )
        self.stdout.write(self.style.SUCCESS(f"Training finished in {elapsed:.2f}s"))
