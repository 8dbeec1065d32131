import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Sequence, Tuple

import numpy as np

from .exceptions import DimensionError, InputValidationError
from .network import LABEL_NAMES

logger = logging.getLogger(__name__)

# "stable" is the positive class
POSITIVE_LABEL = 1
NEGATIVE_LABEL = 0


def confusion_matrix(labels: Iterable[int], predictions: Iterable[int]) -> np.ndarray:
    """2x2 counts, rows = actual label, columns = predicted label."""
    y_true = np.asarray(list(labels), dtype=np.int64)
    y_pred = np.asarray(list(predictions), dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise DimensionError("confusion_matrix", f"{y_true.size} predictions", y_pred.shape)
    for name, values in (("labels", y_true), ("predictions", y_pred)):
        if values.size and (values.min() < 0 or values.max() > 1):
            raise InputValidationError(f"{name} must be 0 or 1")
    matrix = np.zeros((2, 2), dtype=np.int64)
    np.add.at(matrix, (y_true, y_pred), 1)
    return matrix


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class MetricSummary:
    accuracy: float
    precision: float
    recall: float
    f1: float
    undefined: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "undefined": list(self.undefined),
        }


def compute_metrics(confusion: Any) -> MetricSummary:
    """
    Precision, recall, F1 and accuracy with "stable" as the positive class.

    A zero denominator yields 0 and is listed in ``undefined``.
    """
    matrix = np.asarray(confusion)
    if matrix.shape != (2, 2):
        raise DimensionError("compute_metrics", "a 2x2 confusion matrix", matrix.shape)
    if np.any(matrix < 0):
        raise InputValidationError("confusion counts must be non-negative")
    total = int(matrix.sum())
    if total == 0:
        raise InputValidationError("confusion matrix is empty")

    tn, fp = int(matrix[0, 0]), int(matrix[0, 1])
    fn, tp = int(matrix[1, 0]), int(matrix[1, 1])
    undefined = []
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        undefined.append("precision")
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        undefined.append("recall")
    if precision + recall == 0:
        undefined.append("f1")
    return MetricSummary(
        accuracy=(tp + tn) / total,
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        undefined=tuple(undefined),
    )


@dataclass
class EvalReport:
    confusion: np.ndarray
    summary: MetricSummary
    per_object: Dict[str, float] = field(default_factory=dict)
    per_object_confusion: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        return self.summary.accuracy

    @property
    def precision(self) -> float:
        return self.summary.precision

    @property
    def recall(self) -> float:
        return self.summary.recall

    @property
    def f1(self) -> float:
        return self.summary.f1

    @property
    def count(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> Dict[str, Any]:
        return {
            **self.summary.to_dict(),
            "windows": self.count,
            "confusion": self.confusion.tolist(),
            "per_object": dict(sorted(self.per_object.items())),
        }


def build_report(
    labels: Sequence[int], predictions: Sequence[int], object_ids: Sequence[str]
) -> EvalReport:
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if len(object_ids) != labels.size:
        raise DimensionError("build_report", f"{labels.size} object ids", len(object_ids))
    confusion = confusion_matrix(labels, predictions)
    summary = compute_metrics(confusion)
    if summary.undefined:
        logger.warning("Undefined metrics set to 0: %s", ", ".join(summary.undefined))

    objects = np.asarray(object_ids)
    per_object: Dict[str, float] = {}
    per_object_confusion: Dict[str, np.ndarray] = {}
    for obj in sorted(set(object_ids)):
        mask = objects == obj
        per_object[obj] = float((labels[mask] == predictions[mask]).mean())
        per_object_confusion[obj] = confusion_matrix(labels[mask], predictions[mask])
    return EvalReport(
        confusion=confusion,
        summary=summary,
        per_object=per_object,
        per_object_confusion=per_object_confusion,
    )


def label_name(label: int) -> str:
    return LABEL_NAMES[int(label)]
