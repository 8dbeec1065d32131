import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from slipdetect.dataset import load_dataset
from slipdetect.exceptions import ConfigError, InputValidationError
from slipdetect.synth import (
    SynthEpisodeParams,
    SynthObjectSpec,
    contact_profile,
    generate_corpus,
    generate_episode,
    read_objects,
    shear_drop_score,
    stick_slip_period,
)


class EpisodeGeneratorTest(SimpleTestCase):
    def setUp(self):
        self.obj = SynthObjectSpec("obj001", stiffness=0.7, weight_n=2.0, friction_mu=0.6, seed=11)

    def test_slip_shows_shear_drops_and_stable_does_not(self):
        slip = generate_episode(self.obj, SynthEpisodeParams(slip=True, grip_force_n=8.0))
        stable = generate_episode(self.obj, SynthEpisodeParams(slip=False, grip_force_n=12.0))
        self.assertEqual(slip.label, 0)
        self.assertEqual(stable.label, 1)
        self.assertGreater(shear_drop_score(slip), 0.0)
        self.assertEqual(shear_drop_score(stable), 0.0)

    def test_same_inputs_same_episode(self):
        params = SynthEpisodeParams(slip=True, noise_sigma=0.05, episode_index=3)
        first, second = generate_episode(self.obj, params), generate_episode(self.obj, params)
        np.testing.assert_array_equal(first.tactile, second.tactile)
        np.testing.assert_array_equal(first.visual, second.visual)
        self.assertEqual(first.episode_id, "obj001-e003")

    def test_episode_is_valid(self):
        episode = generate_episode(self.obj, SynthEpisodeParams(frames=13, embed_dim=5))
        episode.validate()
        self.assertEqual(episode.visual.shape, (13, 5))
        self.assertEqual(episode.visual.dtype, np.float32)

    def test_short_episode_rejected(self):
        with self.assertRaises(ConfigError):
            SynthEpisodeParams(frames=12)

    def test_stick_slip_period_range(self):
        for weight in (0.1, 2.0, 50.0):
            obj = SynthObjectSpec("o", stiffness=0.5, weight_n=weight, friction_mu=0.5, seed=0)
            self.assertIn(stick_slip_period(obj, SynthEpisodeParams(slip=True)), (3, 4, 5))

    def test_softer_objects_spread_contact(self):
        stiff, soft = contact_profile(1.0), contact_profile(0.2)
        self.assertAlmostEqual(stiff.sum(), 1.0)
        self.assertAlmostEqual(soft.sum(), 1.0)
        self.assertGreater(stiff.max(), soft.max())


class CorpusTest(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_corpus_layout_and_split(self):
        root = Path(self.tmp.name) / "corpus"
        summary = generate_corpus(root, n_objects=5, episodes_per_object=4, master_seed=2)
        self.assertEqual(summary.episodes, 20)
        self.assertEqual(summary.slip_episodes, 10)
        self.assertEqual(len(summary.splits["train"]), 4)
        self.assertFalse(set(summary.splits["train"]) & set(summary.splits["test"]))

        loaded = load_dataset(root)
        self.assertEqual(len(loaded.episodes), 20)
        self.assertEqual(sorted(loaded.objects("train") + loaded.objects("test")), sorted(read_objects(root)))
        labels = [e.label for e in loaded.episodes]
        self.assertEqual(labels.count(0), 10)

    def test_two_objects_split_one_and_one(self):
        summary = generate_corpus(Path(self.tmp.name) / "pair", n_objects=2, episodes_per_object=1)
        self.assertEqual(len(summary.splits["train"]), 1)
        self.assertEqual(len(summary.splits["test"]), 1)

    def test_full_train_fraction_leaves_test_empty(self):
        summary = generate_corpus(Path(self.tmp.name) / "all", n_objects=3, episodes_per_object=1, train_fraction=1.0)
        self.assertEqual(summary.splits["train"], ["obj000", "obj001", "obj002"])
        self.assertEqual(summary.splits["test"], [])

    def test_same_seed_same_bytes(self):
        first, second = Path(self.tmp.name) / "a", Path(self.tmp.name) / "b"
        generate_corpus(first, n_objects=2, episodes_per_object=2, master_seed=9, noise_sigma=0.02)
        generate_corpus(second, n_objects=2, episodes_per_object=2, master_seed=9, noise_sigma=0.02)
        episode = sorted(p.name for p in first.iterdir() if p.is_dir())[0]
        self.assertEqual(
            (first / episode / "tactile.csv").read_bytes(), (second / episode / "tactile.csv").read_bytes()
        )
        self.assertEqual((first / "manifest.json").read_bytes(), (second / "manifest.json").read_bytes())

    def test_slip_fraction_out_of_range(self):
        with self.assertRaises(InputValidationError):
            generate_corpus(Path(self.tmp.name) / "x", n_objects=2, episodes_per_object=2, slip_fraction=1.5)

    def test_no_objects_file_for_plain_datasets(self):
        self.assertEqual(read_objects(self.tmp.name), {})
