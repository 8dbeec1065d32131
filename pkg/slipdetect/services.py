"""
Slip Detection Service Module

Training, evaluation and run bookkeeping on top of the numerical core:
    - TrainingService: minibatch Adam training with best-on-validation selection
    - EvaluationService: batched prediction and metric reports
    - CheckpointCache: in-process cache of loaded checkpoints keyed by (path, mtime)
    - RunLedger: optional persistence of runs/evaluations in the database
    - PredictionService: single-window inference for the API and the predict command
"""

import csv
import hashlib
import json
import logging
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings
from django.core.cache import cache
from django.db import DatabaseError

from .checkpoint import CHECKPOINT_NAME, Checkpoint, load_checkpoint, save_checkpoint
from .dataset import SampleWindow, TactileCalibration, forces_to_image
from .encoders import normalize_image
from .exceptions import ConfigError, InputValidationError, TrainingAbortedError
from .metrics import EvalReport, build_report, compute_metrics
from .models import EvaluationRecord, TrainingRun
from .network import MODALITIES, Prediction, SlipDetector, SlipModelConfig, WindowBatch, predict
from .optim import Adam
from .tensor import softmax_cross_entropy

logger = logging.getLogger(__name__)

HISTORY_FIELDS = ["epoch", "train_loss", "train_accuracy", "val_accuracy", "val_f1"]


def default_calibration() -> TactileCalibration:
    return TactileCalibration.from_ranges(
        getattr(settings, "SLIPNET_SHEAR_RANGE_N", 5.0),
        getattr(settings, "SLIPNET_NORMAL_MAX_N", 15.0),
        tare=getattr(settings, "SLIPNET_TARE", True),
    )


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-7
    batch_size: int = 8
    epochs: int = 10
    seed: int = 0
    seq_len: int = 13
    modality: str = "fused"
    early_stop_patience: Optional[int] = None
    target_train_accuracy: Optional[float] = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.seq_len < 1:
            raise ConfigError(f"sequence length must be >= 1, got {self.seq_len}")
        if self.modality not in MODALITIES:
            raise ConfigError(f"unknown modality {self.modality!r}")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ConfigError("early stop patience must be >= 1")
        if self.target_train_accuracy is not None and not 0.0 < self.target_train_accuracy <= 1.0:
            raise ConfigError("target train accuracy must be in (0, 1]")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: Optional[float] = None
    val_f1: Optional[float] = None

    def to_row(self) -> Dict[str, str]:
        def fmt(value: Optional[float]) -> str:
            return "" if value is None else f"{value:.6f}"

        return {
            "epoch": str(self.epoch),
            "train_loss": fmt(self.train_loss),
            "train_accuracy": fmt(self.train_accuracy),
            "val_accuracy": fmt(self.val_accuracy),
            "val_f1": fmt(self.val_f1),
        }


@dataclass
class TrainResult:
    model_config: SlipModelConfig
    train_config: TrainConfig
    best_arrays: Dict[str, np.ndarray]
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    checkpoint_path: Optional[Path] = None

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    def model(self) -> SlipDetector:
        return SlipDetector.from_arrays(self.model_config, self.best_arrays)

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(config=self.model_config, arrays=self.best_arrays)


def write_history(path: Union[str, Path], history: Sequence[EpochRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=HISTORY_FIELDS, lineterminator="\n")
        writer.writeheader()
        for record in history:
            writer.writerow(record.to_row())
    return path


def _check_windows(windows: Sequence[SampleWindow], cfg: SlipModelConfig, purpose: str) -> None:
    for window in windows:
        for label, frames, needed in (
            ("tactile", window.x_t, cfg.uses_tactile),
            ("visual", window.x_v, cfg.uses_visual),
        ):
            if not needed:
                continue
            if frames is None:
                raise InputValidationError(
                    f"{purpose} window {window.source} lacks {label} frames for a {cfg.modality} model"
                )
            if len(frames) != cfg.seq_len:
                raise InputValidationError(
                    f"{purpose} window {window.source} has {len(frames)} frames, model expects {cfg.seq_len}"
                )
        if cfg.uses_visual and tuple(np.shape(window.x_v)[1:]) != tuple(cfg.visual.frame_shape):
            raise InputValidationError(
                f"{purpose} window {window.source} visual frames are {tuple(np.shape(window.x_v)[1:])}, "
                f"model expects {cfg.visual.frame_shape}"
            )


class EvaluationService:
    """Batched prediction and metric reports."""

    DEFAULT_BATCH = 64

    @classmethod
    def predict_labels(
        cls, model: SlipDetector, windows: Sequence[SampleWindow], batch_size: int = DEFAULT_BATCH
    ) -> np.ndarray:
        labels = []
        for start in range(0, len(windows), batch_size):
            batch = WindowBatch.from_windows(windows[start : start + batch_size])
            logits = model.forward(batch).data
            labels.append(np.argmax(logits, axis=1))
        if not labels:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(labels).astype(np.int64)

    @classmethod
    def evaluate(
        cls,
        model: Union[SlipDetector, Checkpoint],
        windows: Sequence[SampleWindow],
        batch_size: int = DEFAULT_BATCH,
    ) -> EvalReport:
        if isinstance(model, Checkpoint):
            model = model.build_model()
        if not windows:
            raise InputValidationError("nothing to evaluate: zero windows")
        _check_windows(windows, model.cfg, "evaluation")
        predictions = cls.predict_labels(model, windows, batch_size)
        labels = np.array([w.y for w in windows], dtype=np.int64)
        return build_report(labels, predictions, [w.object_id for w in windows])


class TrainingService:
    """
    Minibatch training.

    Each epoch visits the training windows in a seeded permutation (the last
    partial batch is kept). With validation windows, the parameters of the
    best-validation epoch are kept; otherwise the last epoch wins.
    """

    @classmethod
    def train(
        cls,
        model_config: SlipModelConfig,
        train_config: TrainConfig,
        train_windows: Sequence[SampleWindow],
        val_windows: Sequence[SampleWindow] = (),
        checkpoint_dir: Optional[Union[str, Path]] = None,
    ) -> TrainResult:
        if not train_windows:
            raise InputValidationError("training set is empty")
        if model_config.modality != train_config.modality or model_config.seq_len != train_config.seq_len:
            raise ConfigError(
                "model and train configs disagree on modality/sequence length",
                model=[model_config.modality, model_config.seq_len],
                train=[train_config.modality, train_config.seq_len],
            )
        _check_windows(train_windows, model_config, "training")
        if val_windows:
            _check_windows(val_windows, model_config, "validation")

        model = SlipDetector.initialize(model_config, seed=train_config.seed)
        optimizer = Adam(model.trainable_parameters(), lr=train_config.lr)
        rng = np.random.default_rng(train_config.seed)
        directory = Path(checkpoint_dir) if checkpoint_dir is not None else None

        result = TrainResult(model_config, train_config, best_arrays=model.state_arrays())
        best_score = -np.inf
        n = len(train_windows)
        for epoch in range(1, train_config.epochs + 1):
            order = rng.permutation(n)
            loss_total = 0.0
            correct = 0
            for batch_index, start in enumerate(range(0, n, train_config.batch_size)):
                chunk = [train_windows[i] for i in order[start : start + train_config.batch_size]]
                batch = WindowBatch.from_windows(chunk)
                optimizer.zero_grad()
                logits = model.forward(batch)
                loss = softmax_cross_entropy(logits, batch.labels)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingAbortedError(
                        f"non-finite loss at epoch {epoch} batch {batch_index}",
                        epoch=epoch,
                        batch=batch_index,
                    )
                loss.backward()
                try:
                    optimizer.step()
                except TrainingAbortedError as exc:
                    raise TrainingAbortedError(
                        f"{exc.message} at epoch {epoch} batch {batch_index}",
                        epoch=epoch,
                        batch=batch_index,
                        **exc.context,
                    ) from exc
                loss_total += value * len(chunk)
                correct += int((np.argmax(logits.data, axis=1) == batch.labels).sum())

            record = EpochRecord(epoch, loss_total / n, correct / n)
            if val_windows:
                report = EvaluationService.evaluate(model, val_windows)
                record = EpochRecord(epoch, record.train_loss, record.train_accuracy, report.accuracy, report.f1)
                if report.accuracy > best_score:
                    best_score = report.accuracy
                    result.best_arrays = model.state_arrays()
                    result.best_epoch = epoch
            else:
                result.best_arrays = model.state_arrays()
                result.best_epoch = epoch
            result.history.append(record)
            logger.info(
                "epoch=%d loss=%.6f train_acc=%.4f val_acc=%s",
                epoch,
                record.train_loss,
                record.train_accuracy,
                "-" if record.val_accuracy is None else f"{record.val_accuracy:.4f}",
            )

            if directory is not None and train_config.checkpoint_every and epoch % train_config.checkpoint_every == 0:
                save_checkpoint(directory / f"epoch{epoch:04d}.ckpt", model_config, model.state_arrays())

            patience = train_config.early_stop_patience
            if val_windows and patience is not None and epoch - result.best_epoch >= patience:
                logger.info("Early stop at epoch=%d (best epoch=%d)", epoch, result.best_epoch)
                break
            target = train_config.target_train_accuracy
            if target is not None:
                fit = float(np.mean(EvaluationService.predict_labels(model, train_windows) == [w.y for w in train_windows]))
                if fit >= target:
                    logger.info("Train accuracy %.4f reached target at epoch=%d", fit, epoch)
                    break

        if directory is not None:
            result.checkpoint_path = save_checkpoint(directory / CHECKPOINT_NAME, model_config, result.best_arrays)
            write_history(directory / "history.csv", result.history)
        return result


class CheckpointCache:
    """Loaded checkpoints keyed by (resolved path, mtime)."""

    _lock = threading.Lock()
    _entries: Dict[Tuple[str, int], Checkpoint] = {}
    MAX_ENTRIES = 8

    @classmethod
    def get(cls, path: Union[str, Path]) -> Checkpoint:
        resolved = Path(path).resolve()
        try:
            key = (str(resolved), resolved.stat().st_mtime_ns)
        except OSError:
            # let load_checkpoint report the missing file
            return load_checkpoint(resolved)
        with cls._lock:
            if key in cls._entries:
                return cls._entries[key]
        checkpoint = load_checkpoint(resolved)
        with cls._lock:
            if len(cls._entries) >= cls.MAX_ENTRIES:
                cls._entries.pop(next(iter(cls._entries)))
            cls._entries[key] = checkpoint
        return checkpoint

    @classmethod
    def clear(cls) -> None:
        with cls._lock:
            cls._entries.clear()


class MetricsService:
    CACHE_TIMEOUT = 60 * 15  # 15 minutes

    @classmethod
    def _generate_cache_key(cls, prefix: str, **kwargs) -> str:
        """Generate deterministic cache key from parameters."""
        payload = json.dumps(kwargs, sort_keys=True, default=str)
        return f"slipdetect:{prefix}:{hashlib.md5(payload.encode()).hexdigest()}"

    @classmethod
    def from_counts(cls, tp: int, tn: int, fp: int, fn: int) -> Dict[str, Any]:
        cache_key = cls._generate_cache_key("metrics", tp=tp, tn=tn, fp=fp, fn=fn)
        if cached := cache.get(cache_key):
            return cached
        summary = compute_metrics([[tn, fp], [fn, tp]])
        data = summary.to_dict()
        cache.set(cache_key, data, timeout=cls.CACHE_TIMEOUT)
        return data


class RunLedger:
    """
    Records runs in the database when SLIPNET_RECORD_RUNS is on.

    Persistence problems are logged and swallowed: training output never
    depends on the ledger.
    """

    @classmethod
    def enabled(cls) -> bool:
        return bool(getattr(settings, "SLIPNET_RECORD_RUNS", True))

    @classmethod
    def record_run(
        cls,
        name: str,
        result: TrainResult,
        preset: str = "",
        variant: str = "",
        report_dir: Union[str, Path] = "",
    ):
        if not cls.enabled():
            return None
        try:
            return TrainingRun.objects.create(
                name=name,
                preset=preset,
                variant=variant or result.model_config.modality,
                modality=result.model_config.modality,
                arch=result.model_config.arch,
                seq_len=result.model_config.seq_len,
                seed=result.train_config.seed,
                lr=result.train_config.lr,
                batch_size=result.train_config.batch_size,
                epochs_run=result.epochs_run,
                best_epoch=result.best_epoch,
                config_digest=result.model_config.digest(),
                checkpoint_path=str(result.checkpoint_path or ""),
                report_dir=str(report_dir),
            )
        except DatabaseError:
            logger.warning("Run ledger unavailable; run %s not recorded", name)
            return None

    @classmethod
    def record_evaluation(cls, run, report: EvalReport, split: str = "test"):
        if run is None or not cls.enabled():
            return None
        try:
            return EvaluationRecord.objects.create(
                run=run,
                split=split,
                windows=report.count,
                accuracy=report.accuracy,
                precision=report.precision,
                recall=report.recall,
                f1=report.f1,
                confusion=report.confusion.tolist(),
                per_object=dict(sorted(report.per_object.items())),
            )
        except DatabaseError:
            logger.warning("Run ledger unavailable; evaluation of %s not recorded", run.name)
            return None


class PredictionService:
    """Single-window inference against a checkpoint on disk."""

    @classmethod
    def window_from_arrays(
        cls,
        tactile: Optional[np.ndarray] = None,
        visual: Optional[np.ndarray] = None,
        forces: bool = False,
        calibration: Optional[TactileCalibration] = None,
    ) -> WindowBatch:
        """
        A batch of one window. With ``forces`` the tactile frames are raw
        4x4x3 readings and are converted to images, tared on the first frame.
        """
        if tactile is not None and forces:
            calibration = calibration or default_calibration()
            frames = np.asarray(tactile, dtype=np.float64)
            baseline = frames[0] if calibration.tare and len(frames) else None
            tactile = np.stack([forces_to_image(frame, calibration, baseline) for frame in frames])
        return WindowBatch(
            tactile=None if tactile is None else np.asarray(tactile, dtype=np.float64)[None],
            visual=None if visual is None else normalize_image(visual)[None],
        )

    @classmethod
    def predict(cls, checkpoint_path: Union[str, Path], window: WindowBatch) -> Prediction:
        checkpoint = CheckpointCache.get(checkpoint_path)
        model = checkpoint.build_model()
        prediction = predict(window, model.cfg, model.params)
        logger.debug(
            "Prediction label=%d confidence=%.4f checkpoint=%s", prediction.label, prediction.confidence, checkpoint_path
        )
        return prediction
