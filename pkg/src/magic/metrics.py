"""Confusion matrices and macro-averaged accuracy, precision, recall, F1.

Macro averaging (the unweighted mean of per-class values) is the convention
throughout.  A class that was never predicted has precision 0 rather than
NaN, and is flagged in the report so aggregation stays well-defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricsError(Exception):
    """Invalid label sequences or empty matrices."""


@dataclass
class ConfusionMatrix:
    """counts[actual][predicted], non-negative integers."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise MetricsError("confusion matrix must be square")
        if np.any(counts < 0):
            raise MetricsError("confusion matrix entries must be non-negative")
        self.counts = counts

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_lists(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self.counts]


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    zero_precision_denominator: bool = False
    zero_recall_denominator: bool = False


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: list[ClassMetrics]
    matrix: ConfusionMatrix

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": [
                {
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "support": c.support,
                    "zero_precision_denominator": c.zero_precision_denominator,
                    "zero_recall_denominator": c.zero_recall_denominator,
                }
                for c in self.per_class
            ],
        }

    def to_text(self) -> str:
        lines = [
            f"accuracy: {self.accuracy:.4f}",
            f"macro_precision: {self.macro_precision:.4f}",
            f"macro_recall: {self.macro_recall:.4f}",
            f"macro_f1: {self.macro_f1:.4f}",
        ]
        for i, c in enumerate(self.per_class):
            flag = " (never predicted)" if c.zero_precision_denominator else ""
            lines.append(
                f"class[{i}]: precision={c.precision:.4f} recall={c.recall:.4f} "
                f"f1={c.f1:.4f} support={c.support}{flag}"
            )
        return "\n".join(lines)


def confusion(actual, predicted, num_classes: int) -> ConfusionMatrix:
    actual = np.asarray(actual, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if actual.shape != predicted.shape or actual.ndim != 1:
        raise MetricsError("label sequences must be 1-D and equally long")
    for name, labels in (("actual", actual), ("predicted", predicted)):
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise MetricsError(f"{name} label out of range [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (actual, predicted), 1)
    return ConfusionMatrix(counts)


def metrics(matrix: ConfusionMatrix) -> MetricsReport:
    counts = matrix.counts
    total = matrix.total
    if total == 0:
        raise MetricsError("confusion matrix is empty")
    per_class: list[ClassMetrics] = []
    for c in range(matrix.num_classes):
        tp = float(counts[c, c])
        col = float(counts[:, c].sum())
        row = float(counts[c, :].sum())
        zero_p = col == 0.0
        zero_r = row == 0.0
        precision = 0.0 if zero_p else tp / col
        recall = 0.0 if zero_r else tp / row
        f1 = 0.0 if precision + recall == 0.0 else 2.0 * precision * recall / (precision + recall)
        per_class.append(
            ClassMetrics(
                precision=precision,
                recall=recall,
                f1=f1,
                support=int(row),
                zero_precision_denominator=zero_p,
                zero_recall_denominator=zero_r,
            )
        )
    return MetricsReport(
        accuracy=float(np.trace(counts)) / total,
        macro_precision=float(np.mean([c.precision for c in per_class])),
        macro_recall=float(np.mean([c.recall for c in per_class])),
        macro_f1=float(np.mean([c.f1 for c in per_class])),
        per_class=per_class,
        matrix=matrix,
    )
