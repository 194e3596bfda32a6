"""Evaluation arithmetic for the 3-level emotion task.

Confusion matrix, per-class precision/recall/F1, macro-F1 (primary
aggregate, class-balanced), weighted-F1 (for comparison) and accuracy.
Everything here is a pure function of integer label sequences.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

NUM_CLASSES = 3


class LengthMismatch(ValueError):
    """true/predicted sequences differ in length (or are empty)."""


class LabelOutOfRange(ValueError):
    """A label is outside {0, 1, 2}."""


class EmptyMatrix(ValueError):
    """Confusion matrix with zero total count."""


@dataclass
class ConfusionMatrix:
    """3x3 raw counts; rows = true level, columns = predicted level."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (NUM_CLASSES, NUM_CLASSES):
            raise ValueError(f"expected {NUM_CLASSES}x{NUM_CLASSES} counts, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def supports(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int
    # true when a 0/0 convention fired (empty class or empty predicted column)
    degenerate: bool


@dataclass
class MetricsReport:
    confusion: ConfusionMatrix
    per_class: list[ClassScores]
    macro_f1: float
    weighted_f1: float
    accuracy: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "per_class": [
                {
                    "level": i,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                    "degenerate": s.degenerate,
                }
                for i, s in enumerate(self.per_class)
            ],
            "confusion": self.counts_as_lists(),
        }

    def counts_as_lists(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self.confusion.counts]

    def to_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def confusion_matrix(true_labels: Sequence[int], predicted: Sequence[int]) -> ConfusionMatrix:
    """Tally counts[i][j] = |{k : true=i, pred=j}|.

    Raises:
        LengthMismatch: sequences empty or of different lengths.
        LabelOutOfRange: any entry outside {0, 1, 2}.
    """
    true_arr = np.asarray(true_labels)
    pred_arr = np.asarray(predicted)
    if len(true_arr) != len(pred_arr) or len(true_arr) == 0:
        raise LengthMismatch(f"got {len(true_arr)} true vs {len(pred_arr)} predicted labels")
    for name, arr in (("true", true_arr), ("predicted", pred_arr)):
        if not np.issubdtype(arr.dtype, np.integer):
            raise LabelOutOfRange(f"{name} labels must be integers, got dtype {arr.dtype}")
        if arr.min() < 0 or arr.max() >= NUM_CLASSES:
            raise LabelOutOfRange(f"{name} labels must lie in [0, {NUM_CLASSES}), got {arr.min()}..{arr.max()}")

    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(counts, (true_arr, pred_arr), 1)
    return ConfusionMatrix(counts=counts)


def f1_from_pr(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * (precision * recall) / (precision + recall)


def report(confusion: ConfusionMatrix) -> MetricsReport:
    """Per-class precision/recall/F1 plus macro-F1, weighted-F1, accuracy.

    0/0 cases (empty class or never-predicted column) score 0 and are
    flagged `degenerate` instead of propagating NaN.

    Raises:
        EmptyMatrix: total count is zero.
    """
    counts = confusion.counts
    total = confusion.total
    if total == 0:
        raise EmptyMatrix("confusion matrix has zero total count")

    col_sums = counts.sum(axis=0)
    row_sums = counts.sum(axis=1)
    per_class = []
    for c in range(NUM_CLASSES):
        tp = int(counts[c, c])
        precision = tp / col_sums[c] if col_sums[c] > 0 else 0.0
        recall = tp / row_sums[c] if row_sums[c] > 0 else 0.0
        per_class.append(
            ClassScores(
                precision=float(precision),
                recall=float(recall),
                f1=f1_from_pr(float(precision), float(recall)),
                support=int(row_sums[c]),
                degenerate=bool(col_sums[c] == 0 or row_sums[c] == 0),
            )
        )

    f1s = np.array([s.f1 for s in per_class])
    supports = row_sums / total
    return MetricsReport(
        confusion=confusion,
        per_class=per_class,
        macro_f1=float(f1s.mean()),
        weighted_f1=float((f1s * supports).sum()),
        accuracy=float(np.trace(counts) / total),
    )


def write_confusion_csv(confusion: ConfusionMatrix, path: str | Path) -> Path:
    """Counts as CSV with labeled header row/column (true_level x pred_*)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["true_level"] + [f"pred_{c}" for c in range(NUM_CLASSES)])
        for c in range(NUM_CLASSES):
            writer.writerow([c] + [int(v) for v in confusion.counts[c]])
    return path


def read_confusion_csv(path: str | Path) -> ConfusionMatrix:
    with Path(path).open(newline="") as handle:
        rows = list(csv.reader(handle))
    counts = np.array([[int(v) for v in row[1:]] for row in rows[1:]], dtype=np.int64)
    return ConfusionMatrix(counts=counts)
