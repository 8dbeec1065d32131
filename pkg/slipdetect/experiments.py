"""
Experiment presets.

An experiment spec (TOML) names a preset, the seeds to run and optional
[data], [train] and [model] sections. Every preset trains one model per
(variant, seed) on an object-disjoint split and writes CSV reports:

    runs.csv        one row per (variant, seed)
    metrics.csv     mean metrics per variant
    confusion.csv   confusion counts per variant, summed over seeds
    per_object.csv  accuracy per test object (with stiffness for generated corpora)
    table.csv       metric rows x variant columns (modality_ablation, arch_comparison)
    variants/<variant>/seed<k>/checkpoint.ckpt, history.csv
"""

import csv
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np
from django.conf import settings

from .api.serializers import (
    PRESET_CHOICES,
    DataSectionSerializer,
    ExperimentSpecSerializer,
    ModelSectionSerializer,
    TrainConfigSerializer,
    validated,
)
from .dataset import GraspEpisode, LoadResult, SampleWindow, load_dataset, split_by_object
from .encoders import VisualEncoderSpec
from .exceptions import DataError, InputValidationError, UsageError
from .metrics import EvalReport
from .network import MODALITIES, SlipModelConfig, build_model_config
from .services import EvaluationService, RunLedger, TrainConfig, TrainingService, default_calibration
from .synth import generate_corpus, read_objects

logger = logging.getLogger(__name__)

PRESETS = tuple(PRESET_CHOICES)
DEFAULT_SEQ_LENS = tuple(range(8, 14))
ARCH_LABELS = {"tcn": "CNN-TCN", "mstcn": "CNN-MSTCN"}
METRIC_NAMES = ("accuracy", "precision", "recall", "f1")
TABLE_PRESETS = ("modality_ablation", "arch_comparison")


@dataclass(frozen=True)
class ExperimentSpec:
    preset: str
    name: str
    seeds: Tuple[int, ...] = (0,)
    seq_lens: Tuple[int, ...] = DEFAULT_SEQ_LENS
    data: Mapping[str, Any] = field(default_factory=dict)
    train: Mapping[str, Any] = field(default_factory=dict)
    model: Mapping[str, Any] = field(default_factory=dict)

    @property
    def synthetic(self) -> bool:
        return not self.data.get("root")

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "ExperimentSpec":
        preset = raw.get("preset")
        if preset not in PRESETS:
            raise UsageError(
                f"unknown preset {preset!r}; available presets: {', '.join(PRESETS)}",
                presets=list(PRESETS),
            )
        data = validated(ExperimentSpecSerializer, dict(raw))
        return cls(
            preset=data["preset"],
            name=data.get("name") or data["preset"],
            seeds=tuple(data.get("seeds") or (0,)),
            seq_lens=tuple(data.get("seq_lens") or DEFAULT_SEQ_LENS),
            data=dict(data.get("data") or validated(DataSectionSerializer, {})),
            train=dict(data.get("train") or validated(TrainConfigSerializer, {})),
            model=dict(data.get("model") or validated(ModelSectionSerializer, {})),
        )


def load_experiment_spec(path: Union[str, Path]) -> ExperimentSpec:
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except OSError as exc:
        raise UsageError(f"cannot read experiment spec {path}: {exc.strerror}", path=str(path)) from exc
    except tomllib.TOMLDecodeError as exc:
        raise InputValidationError(f"experiment spec {path} is not valid TOML: {exc}", path=str(path)) from exc
    return ExperimentSpec.from_mapping(raw)


@dataclass(frozen=True)
class Variant:
    name: str
    model_config: SlipModelConfig


def build_variants(spec: ExperimentSpec, visual: VisualEncoderSpec) -> List[Variant]:
    model = spec.model
    arch = model.get("arch", "mstcn")
    common = dict(
        visual=visual,
        visual_frozen=bool(model.get("visual_frozen", False)),
        readout=model.get("readout", "last"),
    )
    seq_len = int(spec.train.get("seq_len", 13))
    if spec.preset == "seq_len_sweep":
        return [
            Variant(f"T={t}", build_model_config("fused", arch, t, **common)) for t in spec.seq_lens
        ]
    if spec.preset == "modality_ablation":
        return [Variant(m, build_model_config(m, arch, seq_len, **common)) for m in MODALITIES]
    if spec.preset == "arch_comparison":
        return [
            Variant(ARCH_LABELS[a], build_model_config("fused", a, seq_len, **common))
            for a in ("tcn", "mstcn")
        ]
    return [Variant("tactile_only", build_model_config("tactile_only", arch, seq_len, **common))]


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "", name) or "variant"


@dataclass
class RunRow:
    variant: str
    seed: int
    model_config: SlipModelConfig
    report: EvalReport
    epochs_run: int
    best_epoch: int


@dataclass
class ExperimentReport:
    out_dir: Path
    rows: List[RunRow]
    files: List[Path]

    def mean_metrics(self) -> Dict[str, Dict[str, float]]:
        grouped: Dict[str, List[RunRow]] = {}
        for row in self.rows:
            grouped.setdefault(row.variant, []).append(row)
        return {
            variant: {m: float(np.mean([getattr(r.report, m) for r in rows])) for m in METRIC_NAMES}
            for variant, rows in grouped.items()
        }


class ExperimentService:
    """Runs one preset end to end."""

    @classmethod
    def _prepare_data(cls, spec: ExperimentSpec, out_dir: Path) -> Tuple[Path, LoadResult]:
        data = spec.data
        if spec.synthetic:
            root = out_dir / "corpus"
            generate_corpus(
                root,
                n_objects=int(data.get("n_objects", 50)),
                episodes_per_object=int(data.get("episodes_per_object", 10)),
                slip_fraction=float(data.get("slip_fraction", 0.5)),
                master_seed=int(data.get("master_seed", 0)),
                frames=int(data.get("frames", 20)),
                noise_sigma=float(data.get("noise_sigma", 0.0)),
                embed_dim=int(data.get("embed_dim", 8)),
            )
        else:
            root = Path(data["root"])
        loaded = load_dataset(root, workers=getattr(settings, "SLIPNET_LOAD_WORKERS", 4))
        if not loaded.episodes:
            raise DataError(f"no usable episodes under {root}", path=str(root))
        return root, loaded

    @classmethod
    def object_split(cls, loaded: LoadResult) -> Tuple[List[str], List[str]]:
        """Manifest train/test objects; refuses any object on both sides."""
        train, test = loaded.objects("train"), loaded.objects("test")
        if not train:
            raise DataError("dataset manifest has no train split")
        shared = sorted(set(train) & set(test))
        if shared:
            raise InputValidationError(
                f"split hygiene violated, objects in train and test: {', '.join(shared)}", objects=shared
            )
        return train, test

    @classmethod
    def visual_spec(cls, mode: str, episodes: Sequence[GraspEpisode]) -> VisualEncoderSpec:
        """Visual encoder settings matching the frames the dataset holds."""
        first = episodes[0]
        if mode == "small_cnn":
            if first.visual_kind != "image":
                raise InputValidationError("small_cnn needs visual images; dataset holds embeddings")
            return VisualEncoderSpec(mode="small_cnn")
        if first.visual_kind != "embedding":
            raise InputValidationError("embedding_passthrough needs visual embeddings; dataset holds images")
        return VisualEncoderSpec(mode=mode, embed_dim=int(first.visual.shape[1]))

    @classmethod
    def _train_config(cls, spec: ExperimentSpec, config: SlipModelConfig, seed: int) -> TrainConfig:
        train = spec.train
        lr_setting = "SLIPNET_SYNTH_LR" if spec.synthetic else "SLIPNET_RECORDED_LR"
        default_lr = getattr(settings, lr_setting, 1e-3 if spec.synthetic else 1e-7)
        return TrainConfig(
            lr=float(train.get("lr") or default_lr),
            batch_size=int(train.get("batch_size", 8)),
            epochs=int(train.get("epochs", 10)),
            seed=seed,
            seq_len=config.seq_len,
            modality=config.modality,
            early_stop_patience=train.get("early_stop_patience"),
            target_train_accuracy=train.get("target_train_accuracy"),
            checkpoint_every=int(train.get("checkpoint_every", 0)),
        )

    @classmethod
    def hold_out(
        cls, windows: List[SampleWindow], train_objects: Sequence[str], count: int, seed: int
    ) -> Tuple[List[SampleWindow], List[SampleWindow]]:
        if count <= 0:
            return windows, []
        if count >= len(train_objects):
            raise InputValidationError(
                f"cannot hold out {count} of {len(train_objects)} training objects for validation"
            )
        rng = np.random.default_rng(seed)
        held = set(rng.choice(sorted(train_objects), size=count, replace=False).tolist())
        fit = [w for w in windows if w.object_id not in held]
        val = [w for w in windows if w.object_id in held]
        return fit, val

    @classmethod
    def run(cls, spec: ExperimentSpec, out_dir: Union[str, Path]) -> ExperimentReport:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        root, loaded = cls._prepare_data(spec, out_dir)
        train_objects, test_objects = cls.object_split(loaded)
        if not test_objects:
            raise DataError(f"dataset under {root} has no test objects to evaluate on", path=str(root))
        calibration = default_calibration()
        visual = cls.visual_spec(spec.model.get("visual_mode", "embedding_passthrough"), loaded.episodes)
        stride = int(spec.data.get("stride", 1))
        val_count = int(spec.train.get("val_objects", 0))

        rows: List[RunRow] = []
        for variant in build_variants(spec, visual):
            cfg = variant.model_config
            logger.info("variant=%s start seeds=%s", variant.name, list(spec.seeds))
            train_windows, test_windows = split_by_object(
                loaded.episodes, train_objects, test_objects, cfg.seq_len, stride, calibration
            )
            if not test_windows:
                raise DataError(
                    f"test objects yield no windows of {cfg.seq_len} frames", variant=variant.name, path=str(root)
                )
            for seed in spec.seeds:
                fit, val = cls.hold_out(train_windows, train_objects, val_count, seed)
                run_dir = out_dir / "variants" / _slug(variant.name) / f"seed{seed}"
                result = TrainingService.train(cfg, cls._train_config(spec, cfg, seed), fit, val, run_dir)
                report = EvaluationService.evaluate(result.model(), test_windows)
                run = RunLedger.record_run(
                    f"{spec.name}/{variant.name}/seed{seed}",
                    result,
                    preset=spec.preset,
                    variant=variant.name,
                    report_dir=out_dir,
                )
                RunLedger.record_evaluation(run, report)
                rows.append(RunRow(variant.name, seed, cfg, report, result.epochs_run, result.best_epoch))
                logger.info(
                    "variant=%s seed=%d accuracy=%.4f f1=%.4f", variant.name, seed, report.accuracy, report.f1
                )

        report = ExperimentReport(out_dir=out_dir, rows=rows, files=[])
        report.files = ReportWriter.write(spec, report, read_objects(root))
        return report


def _fmt(value: float) -> str:
    return f"{value:.6f}"


class ReportWriter:
    @classmethod
    def _write(cls, path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        return path

    @classmethod
    def write(cls, spec: ExperimentSpec, report: ExperimentReport, objects: Mapping[str, Any]) -> List[Path]:
        out = report.out_dir
        files = []
        files.append(
            cls._write(
                out / "runs.csv",
                ["variant", "seed", "modality", "arch", "seq_len", "epochs_run", "best_epoch",
                 *METRIC_NAMES, "tp", "tn", "fp", "fn"],
                [
                    [
                        r.variant, r.seed, r.model_config.modality, r.model_config.arch, r.model_config.seq_len,
                        r.epochs_run, r.best_epoch, *(_fmt(getattr(r.report, m)) for m in METRIC_NAMES),
                        int(r.report.confusion[1, 1]), int(r.report.confusion[0, 0]),
                        int(r.report.confusion[0, 1]), int(r.report.confusion[1, 0]),
                    ]
                    for r in report.rows
                ],
            )
        )

        means = report.mean_metrics()
        first: Dict[str, RunRow] = {}
        summed: Dict[str, np.ndarray] = {}
        for r in report.rows:
            first.setdefault(r.variant, r)
            summed[r.variant] = summed.get(r.variant, np.zeros((2, 2), dtype=np.int64)) + r.report.confusion
        files.append(
            cls._write(
                out / "metrics.csv",
                ["variant", "modality", "arch", "seq_len", "seeds", *METRIC_NAMES],
                [
                    [
                        variant, first[variant].model_config.modality, first[variant].model_config.arch,
                        first[variant].model_config.seq_len, len(spec.seeds),
                        *(_fmt(values[m]) for m in METRIC_NAMES),
                    ]
                    for variant, values in means.items()
                ],
            )
        )
        files.append(
            cls._write(
                out / "confusion.csv",
                ["variant", "actual", "predicted_slip", "predicted_stable"],
                [
                    [variant, actual, int(matrix[i, 0]), int(matrix[i, 1])]
                    for variant, matrix in summed.items()
                    for i, actual in enumerate(("slip", "stable"))
                ],
            )
        )

        object_rows = []
        for r in report.rows:
            for obj, accuracy in sorted(r.report.per_object.items()):
                stiffness = getattr(objects.get(obj), "stiffness", None)
                object_rows.append(
                    [
                        r.variant, r.seed, obj, "" if stiffness is None else _fmt(stiffness),
                        int(r.report.per_object_confusion[obj].sum()), _fmt(accuracy),
                    ]
                )
        if spec.preset == "stiffness_probe":
            object_rows.sort(key=lambda row: (row[0], row[1], row[3] == "", row[3], row[2]))
        files.append(
            cls._write(out / "per_object.csv", ["variant", "seed", "object_id", "stiffness", "windows", "accuracy"], object_rows)
        )

        if spec.preset in TABLE_PRESETS:
            variants = list(means)
            files.append(
                cls._write(
                    out / "table.csv",
                    ["metric", *variants],
                    [[m, *(f"{100.0 * means[v][m]:.2f}" for v in variants)] for m in METRIC_NAMES],
                )
            )
        logger.info("Wrote %d report files to %s", len(files), out)
        return files

    @classmethod
    def write_evaluation(cls, out_dir: Union[str, Path], report: EvalReport, label: str = "") -> List[Path]:
        """metrics.csv, confusion.csv and per_object.csv for a single evaluation."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        matrix = report.confusion
        return [
            cls._write(
                out / "metrics.csv",
                ["label", "windows", *METRIC_NAMES],
                [[label, report.count, *(_fmt(getattr(report, m)) for m in METRIC_NAMES)]],
            ),
            cls._write(
                out / "confusion.csv",
                ["actual", "predicted_slip", "predicted_stable"],
                [[actual, int(matrix[i, 0]), int(matrix[i, 1])] for i, actual in enumerate(("slip", "stable"))],
            ),
            cls._write(
                out / "per_object.csv",
                ["object_id", "windows", "accuracy"],
                [
                    [obj, int(report.per_object_confusion[obj].sum()), _fmt(accuracy)]
                    for obj, accuracy in sorted(report.per_object.items())
                ],
            ),
        ]


def run_experiment(path: Union[str, Path], out_dir: Union[str, Path, None] = None) -> ExperimentReport:
    """Load a TOML spec and run it; reports go to ``out_dir`` or SLIPNET_REPORT_ROOT/<name>."""
    spec = load_experiment_spec(path)
    if out_dir is None:
        out_dir = Path(getattr(settings, "SLIPNET_REPORT_ROOT", "reports")) / spec.name
    return ExperimentService.run(spec, out_dir)
