"""Evaluation metrics: balanced accuracy, AUROC with tie handling, ROC curves,
and the metadata/disease correlation analysis."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass
class ConfusionMatrix:
    """Counts matrix with rows = true class, columns = predicted class."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion matrix counts must be non-negative")

    @classmethod
    def binary(cls, tp: int, fp: int, tn: int, fn: int) -> "ConfusionMatrix":
        return cls(np.array([[tn, fp], [fn, tp]]))

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes: Optional[int] = None) -> "ConfusionMatrix":
        y_true = np.asarray(y_true, dtype=np.int64)
        y_pred = np.asarray(y_pred, dtype=np.int64)
        if y_true.shape != y_pred.shape:
            raise ValueError("y_true and y_pred must have the same length")
        k = n_classes or int(max(y_true.max(initial=0), y_pred.max(initial=0))) + 1
        counts = np.zeros((k, k), dtype=np.int64)
        np.add.at(counts, (y_true, y_pred), 1)
        return cls(counts)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    # binary accessors, positive class = 1
    @property
    def tp(self) -> int:
        return int(self.counts[1, 1])

    @property
    def fp(self) -> int:
        return int(self.counts[0, 1])

    @property
    def tn(self) -> int:
        return int(self.counts[0, 0])

    @property
    def fn(self) -> int:
        return int(self.counts[1, 0])

    def to_dict(self) -> dict:
        return {"counts": self.counts.tolist()}


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    """Mean per-class recall; for the binary case (TPR + TNR) / 2."""
    supports = cm.counts.sum(axis=1)
    for cls_idx, support in enumerate(supports):
        if support == 0:
            raise ValueError(f"class {cls_idx} has zero support")
    recalls = cm.counts.diagonal() / supports
    return float(recalls.mean())


def _validate_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    if labels.all() or (~labels).all():
        raise ValueError("both classes must be present")
    return scores, labels


def auroc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via the rank-sum statistic.

    Average ranks make ties count exactly 0.5, so this equals the brute-force
    all-pairs statistic bit for bit.
    """
    scores, labels = _validate_binary(scores, labels)
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(scores, labels) -> list[tuple[float, float]]:
    """(FPR, TPR) at every distinct threshold, from (0, 0) up to (1, 1)."""
    scores, labels = _validate_binary(scores, labels)
    order = np.argsort(-scores, kind="stable")
    sorted_labels = labels[order]
    sorted_scores = scores[order]
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    cut_indices = np.concatenate([distinct, [scores.size - 1]])
    tps = np.cumsum(sorted_labels)[cut_indices]
    fps = np.cumsum(~sorted_labels)[cut_indices]
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    points = [(0.0, 0.0)]
    points.extend((fp / n_neg, tp / n_pos) for fp, tp in zip(fps, tps))
    return points


def roc_area(points: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal area under a ROC polyline."""
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


@dataclass
class CorrelationResult:
    """Pearson correlations between metadata features (rows) and diseases (columns).

    ``defined[i, j]`` is False where either column had zero variance; the
    matching matrix entry is 0 there rather than NaN.
    """

    matrix: np.ndarray
    defined: np.ndarray
    feature_names: tuple[str, ...]
    disease_names: tuple[str, ...]


def correlation_matrix(features: np.ndarray, labels: np.ndarray,
                       feature_names: Sequence[str], disease_names: Sequence[str]) -> CorrelationResult:
    """Pearson correlation per (feature, disease) pair over numerically encoded columns."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if features.shape[0] != labels.shape[0]:
        raise ValueError("features and labels must describe the same samples")
    nf, nd = features.shape[1], labels.shape[1]
    matrix = np.zeros((nf, nd))
    defined = np.ones((nf, nd), dtype=bool)
    f_std = features.std(axis=0)
    l_std = labels.std(axis=0)
    f_centered = features - features.mean(axis=0)
    l_centered = labels - labels.mean(axis=0)
    for i in range(nf):
        for j in range(nd):
            if f_std[i] == 0 or l_std[j] == 0:
                defined[i, j] = False
                continue
            cov = (f_centered[:, i] * l_centered[:, j]).mean()
            matrix[i, j] = cov / (f_std[i] * l_std[j])
    return CorrelationResult(matrix, defined, tuple(feature_names), tuple(disease_names))


@dataclass
class MetricsReport:
    """Per-disease evaluation results plus gate statistics."""

    per_disease: dict[str, dict] = field(default_factory=dict)
    rejection_rate: Optional[float] = None
    n_evaluated: int = 0
    n_rejected: int = 0
    fold_stats: Optional[dict[str, dict[str, float]]] = None

    @property
    def mean_balanced_accuracy(self) -> float:
        values = [d["balanced_accuracy"] for d in self.per_disease.values()]
        return float(np.mean(values))

    def to_dict(self) -> dict:
        out = {
            "per_disease": self.per_disease,
            "rejection_rate": self.rejection_rate,
            "n_evaluated": self.n_evaluated,
            "n_rejected": self.n_rejected,
            "mean_balanced_accuracy": self.mean_balanced_accuracy if self.per_disease else None,
        }
        if self.fold_stats is not None:
            out["fold_stats"] = self.fold_stats
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def export_roc_csv(points: Sequence[tuple[float, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        writer.writerows(points)


def fold_mean_sd(per_fold: Sequence[dict[str, float]]) -> dict[str, dict[str, float]]:
    """mean and SD for every metric key across folds."""
    keys = per_fold[0].keys()
    return {
        key: {
            "mean": float(np.mean([f[key] for f in per_fold])),
            "sd": float(np.std([f[key] for f in per_fold], ddof=1)) if len(per_fold) > 1 else 0.0,
        }
        for key in keys
    }
