"""Confusion matrix, accuracy and per-class / macro precision, recall, F1."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMatrix, InvalidClass, LengthMismatch


@dataclass(eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, cols: predicted class

    @property
    def num_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())


def confusion(true_labels, predicted_labels, num_classes=3):
    t = np.asarray(true_labels, dtype=np.int64).ravel()
    p = np.asarray(predicted_labels, dtype=np.int64).ravel()
    if t.shape != p.shape:
        raise LengthMismatch(f"{t.size} true labels vs {p.size} predictions")
    for arr in (t, p):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise InvalidClass(f"class index outside [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


@dataclass
class Scores:
    accuracy: float
    per_class: list  # (precision, recall, f1) per class
    macro_f1: float
    confusion: ConfusionMatrix
    zero_division: list  # class indices where precision or recall was undefined

    @property
    def macro_precision(self):
        return float(np.mean([p for p, _, _ in self.per_class]))

    @property
    def macro_recall(self):
        return float(np.mean([r for _, r, _ in self.per_class]))

    def as_report(self, class_names=None):
        names = class_names or [str(i) for i in range(len(self.per_class))]
        return {
            "accuracy": self.accuracy,
            "precision": self.macro_precision,
            "recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": [
                {"class": names[c], "precision": p, "recall": r, "f1": f}
                for c, (p, r, f) in enumerate(self.per_class)
            ],
            "zero_division": [names[c] for c in self.zero_division],
            "confusion": self.confusion.counts.tolist(),
        }


def _ratio(num, den):
    return num / den if den else 0.0


def scores(cm):
    """Accuracy, per-class (precision, recall, F1) and their macro F1.

    Undefined ratios (no predictions or no members of a class) count as 0
    and the class is listed in ``zero_division``.
    """
    counts = np.asarray(cm.counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix has no samples")
    diag = np.diag(counts)
    colsum = counts.sum(axis=0)
    rowsum = counts.sum(axis=1)
    per_class, flagged = [], []
    for c in range(counts.shape[0]):
        p = _ratio(int(diag[c]), int(colsum[c]))
        r = _ratio(int(diag[c]), int(rowsum[c]))
        f = 2 * p * r / (p + r) if p + r else 0.0
        if colsum[c] == 0 or rowsum[c] == 0:
            flagged.append(c)
        per_class.append((p, r, f))
    macro = sum(f for _, _, f in per_class) / len(per_class)
    return Scores(int(diag.sum()) / total, per_class, macro, ConfusionMatrix(counts), flagged)
