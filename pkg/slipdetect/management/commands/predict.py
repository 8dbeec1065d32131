"""
Predict slip/stable for one window of a recorded episode.

Usage:
    python manage.py predict --checkpoint runs/fused/checkpoint.ckpt --episode data/synth/obj001-e003
"""

from django.core.management.base import BaseCommand, CommandError

from slipdetect.dataset import make_windows, read_episode, stack_windows
from slipdetect.exceptions import SlipDetectError, UsageError
from slipdetect.metrics import label_name
from slipdetect.services import CheckpointCache, PredictionService, default_calibration


class Command(BaseCommand):
    help = "Classify the window starting at --start of an episode directory"

    def add_arguments(self, parser):
        parser.add_argument("--checkpoint", type=str, required=True)
        parser.add_argument("--episode", type=str, required=True, help="Episode directory")
        parser.add_argument("--start", type=int, default=0, help="First frame of the window")

    def handle(self, *args, **options):
        try:
            checkpoint_path = options["checkpoint"]
            seq_len = CheckpointCache.get(checkpoint_path).config.seq_len
            episode = read_episode(options["episode"])
            windows = make_windows(episode, seq_len, 1, default_calibration())
            start = options["start"]
            if not 0 <= start < len(windows):
                raise UsageError(
                    f"start must be in [0, {len(windows) - 1}] for {episode.num_frames} frames and T={seq_len}"
                )
            window = windows[start]
            prediction = PredictionService.predict(checkpoint_path, stack_windows([window]))
        except SlipDetectError as exc:
            raise CommandError(exc.as_line()) from exc

        self.stdout.write(f"episode={episode.episode_id} start={start}")
        self.stdout.write(f"label={prediction.label} label_name={prediction.label_name}")
        self.stdout.write(f"confidence={prediction.confidence:.6f}")
        self.stdout.write(f"actual={window.y} actual_name={label_name(window.y)}")
