import csv
import tempfile
from pathlib import Path

from django.test import TestCase, override_settings

from slipdetect.encoders import VisualEncoderSpec
from slipdetect.exceptions import DataError, InputValidationError, UsageError
from slipdetect.experiments import (
    ExperimentService,
    ExperimentSpec,
    build_variants,
    load_experiment_spec,
    run_experiment,
)
from slipdetect.models import TrainingRun
from slipdetect.synth import generate_corpus

from .factories import EMBED_DIM, separable_windows

SMALL_DATA = {
    "n_objects": 5,
    "episodes_per_object": 2,
    "frames": 13,
    "embed_dim": EMBED_DIM,
    "master_seed": 3,
    "stride": 3,
}
SMALL_TRAIN = {"epochs": 1, "batch_size": 8, "seq_len": 4}


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


class ExperimentSpecTest(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write_spec(self, text):
        path = Path(self.tmp.name) / "spec.toml"
        path.write_text(text, encoding="utf-8")
        return path

    def test_load_from_toml(self):
        path = self.write_spec(
            'preset = "seq_len_sweep"\nseeds = [0, 1]\nseq_lens = [8, 9]\n\n[train]\nepochs = 2\nlr = 0.01\n'
        )
        spec = load_experiment_spec(path)
        self.assertEqual(spec.name, "seq_len_sweep")
        self.assertEqual(spec.seeds, (0, 1))
        self.assertEqual(spec.seq_lens, (8, 9))
        self.assertEqual(spec.train["epochs"], 2)
        self.assertEqual(spec.model["arch"], "mstcn")
        self.assertTrue(spec.synthetic)

    def test_unknown_preset_lists_available(self):
        with self.assertRaises(UsageError) as ctx:
            ExperimentSpec.from_mapping({"preset": "everything"})
        self.assertIn("modality_ablation", ctx.exception.context["presets"])

    def test_invalid_toml(self):
        with self.assertRaises(InputValidationError):
            load_experiment_spec(self.write_spec("preset = \n"))

    def test_missing_file(self):
        with self.assertRaises(UsageError):
            load_experiment_spec(Path(self.tmp.name) / "absent.toml")

    def test_invalid_section_values(self):
        with self.assertRaises(InputValidationError):
            ExperimentSpec.from_mapping({"preset": "arch_comparison", "train": {"lr": 0}})
        with self.assertRaises(InputValidationError):
            ExperimentSpec.from_mapping({"preset": "arch_comparison", "seeds": [1, 1]})

    def test_variant_names(self):
        visual = VisualEncoderSpec(embed_dim=EMBED_DIM)
        cases = {
            "seq_len_sweep": ["T=8", "T=9", "T=10", "T=11", "T=12", "T=13"],
            "modality_ablation": ["tactile_only", "visual_only", "fused"],
            "arch_comparison": ["CNN-TCN", "CNN-MSTCN"],
            "stiffness_probe": ["tactile_only"],
        }
        for preset, names in cases.items():
            with self.subTest(preset=preset):
                variants = build_variants(ExperimentSpec.from_mapping({"preset": preset}), visual)
                self.assertEqual([v.name for v in variants], names)

    def test_arch_comparison_shares_everything_but_arch(self):
        variants = build_variants(
            ExperimentSpec.from_mapping({"preset": "arch_comparison"}), VisualEncoderSpec(embed_dim=EMBED_DIM)
        )
        tcn, mstcn = (v.model_config for v in variants)
        self.assertEqual((tcn.arch, mstcn.arch), ("tcn", "mstcn"))
        self.assertEqual(tcn.seq_len, mstcn.seq_len)
        self.assertEqual(tcn.modality, mstcn.modality)

    def test_hold_out_by_object(self):
        windows = separable_windows(["a", "b", "c"], per_object=2)
        fit, val = ExperimentService.hold_out(windows, ["a", "b", "c"], 1, seed=0)
        held = {w.object_id for w in val}
        self.assertEqual(len(held), 1)
        self.assertFalse(held & {w.object_id for w in fit})
        with self.assertRaises(InputValidationError):
            ExperimentService.hold_out(windows, ["a", "b", "c"], 3, seed=0)


@override_settings(SLIPNET_SYNTH_LR=1e-2, SLIPNET_LOAD_WORKERS=1)
class ExperimentRunTest(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name) / "out"

    def test_modality_ablation_writes_reports(self):
        spec = ExperimentSpec.from_mapping(
            {"preset": "modality_ablation", "name": "ablation", "data": SMALL_DATA, "train": SMALL_TRAIN}
        )
        report = ExperimentService.run(spec, self.out)

        self.assertEqual([r.variant for r in report.rows], ["tactile_only", "visual_only", "fused"])
        for name in ("runs.csv", "metrics.csv", "confusion.csv", "per_object.csv", "table.csv"):
            self.assertTrue((self.out / name).exists(), name)
        table = read_csv(self.out / "table.csv")
        self.assertEqual(table[0], ["metric", "tactile_only", "visual_only", "fused"])
        self.assertEqual([row[0] for row in table[1:]], ["accuracy", "precision", "recall", "f1"])
        self.assertTrue((self.out / "variants" / "fused" / "seed0" / "checkpoint.ckpt").exists())
        self.assertEqual(TrainingRun.objects.filter(preset="modality_ablation").count(), 3)

        confusion = read_csv(self.out / "confusion.csv")
        self.assertEqual(confusion[0], ["variant", "actual", "predicted_slip", "predicted_stable"])
        self.assertEqual(len(confusion), 1 + 2 * 3)

    def test_seq_len_sweep_rows_per_seed(self):
        spec = ExperimentSpec.from_mapping(
            {
                "preset": "seq_len_sweep",
                "seeds": [0, 1],
                "seq_lens": [3, 4],
                "data": SMALL_DATA,
                "train": SMALL_TRAIN,
            }
        )
        report = ExperimentService.run(spec, self.out)
        self.assertEqual(len(report.rows), 4)
        self.assertFalse((self.out / "table.csv").exists())
        runs = read_csv(self.out / "runs.csv")
        self.assertEqual([(row[0], row[1], row[4]) for row in runs[1:]], [
            ("T=3", "0", "3"), ("T=3", "1", "3"), ("T=4", "0", "4"), ("T=4", "1", "4"),
        ])
        self.assertTrue((self.out / "variants" / "T3" / "seed1" / "history.csv").exists())

    def test_stiffness_probe_reports_stiffness(self):
        spec = ExperimentSpec.from_mapping(
            {"preset": "stiffness_probe", "data": SMALL_DATA, "train": SMALL_TRAIN}
        )
        ExperimentService.run(spec, self.out)
        rows = read_csv(self.out / "per_object.csv")
        self.assertEqual(rows[0], ["variant", "seed", "object_id", "stiffness", "windows", "accuracy"])
        self.assertTrue(rows[1:])
        for row in rows[1:]:
            self.assertGreater(float(row[3]), 0.0)

    def test_small_cnn_needs_image_dataset(self):
        spec = ExperimentSpec.from_mapping(
            {"preset": "stiffness_probe", "data": SMALL_DATA, "train": SMALL_TRAIN, "model": {"visual_mode": "small_cnn"}}
        )
        with self.assertRaises(InputValidationError):
            ExperimentService.run(spec, self.out)

    def test_two_object_corpus_trains_on_one_and_tests_on_the_other(self):
        spec = ExperimentSpec.from_mapping(
            {"preset": "stiffness_probe", "data": {**SMALL_DATA, "n_objects": 2}, "train": SMALL_TRAIN}
        )
        report = ExperimentService.run(spec, self.out)
        self.assertEqual(len(report.rows), 1)
        self.assertGreater(report.rows[0].report.count, 0)
        self.assertEqual(len(report.rows[0].report.per_object), 1)

    def test_dataset_without_test_objects_is_rejected_before_training(self):
        root = Path(self.tmp.name) / "all_train"
        generate_corpus(root, n_objects=3, episodes_per_object=2, frames=13, embed_dim=EMBED_DIM, train_fraction=1.0)
        spec = ExperimentSpec.from_mapping(
            {"preset": "stiffness_probe", "data": {"root": str(root), "stride": 3}, "train": {**SMALL_TRAIN, "lr": 1e-2}}
        )
        with self.assertRaises(DataError) as ctx:
            ExperimentService.run(spec, self.out)
        self.assertIn("no test objects", ctx.exception.message)
        self.assertFalse((self.out / "variants").exists())
        self.assertEqual(TrainingRun.objects.count(), 0)

    def test_run_from_spec_file(self):
        spec = Path(self.tmp.name) / "arch.toml"
        spec.write_text(
            'preset = "arch_comparison"\nname = "arch"\n\n'
            "[data]\nn_objects = 5\nepisodes_per_object = 2\nframes = 13\nembed_dim = 4\nstride = 3\n\n"
            "[train]\nepochs = 1\nseq_len = 4\n",
            encoding="utf-8",
        )
        with override_settings(SLIPNET_REPORT_ROOT=Path(self.tmp.name) / "reports"):
            report = run_experiment(spec)
        self.assertEqual(report.out_dir, Path(self.tmp.name) / "reports" / "arch")
        table = read_csv(report.out_dir / "table.csv")
        self.assertEqual(table[0], ["metric", "CNN-TCN", "CNN-MSTCN"])
