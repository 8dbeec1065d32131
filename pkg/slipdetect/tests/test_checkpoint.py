import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from slipdetect.checkpoint import MAGIC, encode_checkpoint, load_checkpoint, save_checkpoint
from slipdetect.exceptions import CheckpointError
from slipdetect.network import SlipDetector

from .factories import random_batch, small_config


class CheckpointTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.cfg = small_config()
        self.model = SlipDetector.initialize(self.cfg, seed=3)
        self.path = save_checkpoint(Path(self.tmp.name) / "model.ckpt", self.cfg, self.model.params)

    def _write(self, payload: bytes) -> Path:
        path = Path(self.tmp.name) / "broken.ckpt"
        path.write_bytes(payload)
        return path

    def test_reload_gives_identical_predictions(self):
        checkpoint = load_checkpoint(self.path)
        self.assertEqual(checkpoint.config.digest(), self.cfg.digest())
        batch = random_batch(size=3)
        np.testing.assert_array_equal(
            checkpoint.build_model().forward(batch).data, self.model.forward(batch).data
        )

    def test_expected_config_must_match(self):
        load_checkpoint(self.path, expected=self.cfg)
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path, expected=small_config(modality="tactile_only"))

    def test_bad_magic(self):
        payload = self.path.read_bytes()
        with self.assertRaises(CheckpointError):
            load_checkpoint(self._write(b"NOTACKPT" + payload[len(MAGIC):]))

    def test_truncated_file(self):
        payload = self.path.read_bytes()
        with self.assertRaises(CheckpointError) as ctx:
            load_checkpoint(self._write(payload[:-10]))
        self.assertIn("truncated", ctx.exception.message)

    def test_trailing_bytes(self):
        with self.assertRaises(CheckpointError):
            load_checkpoint(self._write(self.path.read_bytes() + b"\x00"))

    def test_corrupt_config_fails_digest(self):
        payload = bytearray(self.path.read_bytes())
        # first byte of the config JSON: magic + version + digest + length
        payload[len(MAGIC) + 4 + 32 + 4] ^= 0xFF
        with self.assertRaises(CheckpointError) as ctx:
            load_checkpoint(self._write(bytes(payload)))
        self.assertIn("digest", ctx.exception.message)

    def test_missing_file(self):
        with self.assertRaises(CheckpointError):
            load_checkpoint(Path(self.tmp.name) / "absent.ckpt")

    def test_encoding_is_deterministic(self):
        self.assertEqual(encode_checkpoint(self.cfg, self.model.params), self.path.read_bytes())

    def test_missing_parameter_refused_on_save(self):
        params = dict(self.model.params)
        params.pop("head.weight")
        with self.assertRaises(CheckpointError):
            encode_checkpoint(self.cfg, params)
