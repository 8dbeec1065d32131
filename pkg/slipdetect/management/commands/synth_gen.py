"""
Generate a synthetic grasp corpus.

Usage:
    python manage.py synth_gen --out data/synth --objects 50 --episodes 10
    python manage.py synth_gen --out data/noisy --noise 0.05 --seed 3
"""

import time
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from slipdetect.exceptions import SlipDetectError
from slipdetect.synth import VISUAL_EMBED_DIM, generate_corpus


class Command(BaseCommand):
    help = "Generate a labeled synthetic visuo-tactile corpus with an object-disjoint train/test split"

    def add_arguments(self, parser):
        parser.add_argument("--out", type=str, default=None, help="Output directory (default: SLIPNET_DATA_ROOT/synth)")
        parser.add_argument("--objects", type=int, default=50, help="Number of objects")
        parser.add_argument("--episodes", type=int, default=10, help="Episodes per object")
        parser.add_argument("--slip-fraction", type=float, default=0.5, help="Share of slipping episodes per object")
        parser.add_argument("--seed", type=int, default=0, help="Master seed")
        parser.add_argument("--frames", type=int, default=20, help="Frames per episode (>= 13)")
        parser.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma on forces (N)")
        parser.add_argument("--embed-dim", type=int, default=VISUAL_EMBED_DIM, help="Visual embedding size")
        parser.add_argument("--train-fraction", type=float, default=0.8, help="Share of objects in the train split")

    def handle(self, *args, **options):
        out = Path(options["out"] or Path(getattr(settings, "SLIPNET_DATA_ROOT", "data")) / "synth")
        start_time = time.perf_counter()
        try:
            summary = generate_corpus(
                out,
                n_objects=options["objects"],
                episodes_per_object=options["episodes"],
                slip_fraction=options["slip_fraction"],
                master_seed=options["seed"],
                frames=options["frames"],
                noise_sigma=options["noise"],
                embed_dim=options["embed_dim"],
                train_fraction=options["train_fraction"],
            )
        except SlipDetectError as exc:
            raise CommandError(exc.as_line()) from exc

        elapsed = time.perf_counter() - start_time
        self.stdout.write(
            self.style.SUCCESS(
                f"Generated {summary.episodes} episodes ({summary.slip_episodes} slipping) over "
                f"{len(summary.objects)} objects in {summary.root} "
                f"[train={len(summary.splits['train'])} test={len(summary.splits['test'])}] in {elapsed:.2f}s"
            )
        )
