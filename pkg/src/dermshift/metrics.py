"""Discrimination metrics and metric-vs-performance correlation.

AUROC is computed rank-based (Mann-Whitney), which equals the fraction
of positive/negative pairs ranked correctly with ties counted as 1/2.
Balanced accuracy averages the per-class recalls at a threshold, so a
degenerate always-one-class predictor scores 0.5. Performance drop is
reference minus shifted.

The correlation analysis relates, across target datasets, image-space
JSD and embedding-space cosine similarity to the discriminator AUROC
shift. The AUROC shift (auroc_drop) of a target is its source-vs-target
discriminator AUROC minus the source-vs-source baseline AUROC, so a
stronger shift yields a larger value; correlations then carry the
expected signs (JSD positive, cosine negative).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DataError,
    EmptyInput,
    LengthMismatch,
    NonFiniteValue,
    SingleClass,
    ZeroVariance,
)
from .metadata import Diagnosis

CORRELATION_VARIABLES = ("jsd", "cosine", "auroc_drop")


@dataclass(frozen=True)
class PredictionSet:
    """Aligned ids, scores and binary labels (1 = positive)."""

    ids: tuple[str, ...]
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if not (len(self.ids) == self.scores.shape[0] == self.labels.shape[0]):
            raise LengthMismatch("ids, scores and labels must align")
        if self.scores.ndim != 1 or self.labels.ndim != 1:
            raise LengthMismatch("scores and labels must be 1-D")
        if not np.isfinite(self.scores).all():
            raise NonFiniteValue("scores contain non-finite values")
        if not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 or 1")

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[str, float, int]]) -> "PredictionSet":
        ids = tuple(r[0] for r in rows)
        scores = np.asarray([r[1] for r in rows], dtype=np.float64)
        labels = np.asarray([r[2] for r in rows], dtype=np.int64)
        return cls(ids=ids, scores=scores, labels=labels)

    @property
    def n(self) -> int:
        return len(self.ids)


def auroc(predictions: PredictionSet) -> float:
    """Probability a random positive outscores a random negative (ties 1/2)."""
    pos = predictions.labels == 1
    n_pos = int(pos.sum())
    n_neg = predictions.n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("AUROC needs both classes")
    ranks = rankdata(predictions.scores, method="average")
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def balanced_accuracy(predictions: PredictionSet, threshold: float = 0.5) -> float:
    """Mean of per-class recalls; score >= threshold predicts positive."""
    pos = predictions.labels == 1
    n_pos = int(pos.sum())
    n_neg = predictions.n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("balanced accuracy needs both classes")
    predicted_pos = predictions.scores >= threshold
    tp = int((predicted_pos & pos).sum())
    tn = int((~predicted_pos & ~pos).sum())
    return 0.5 * (tp / n_pos + tn / n_neg)


def performance_drop(reference: float, shifted: float) -> float:
    return reference - shifted


def pearson(x: Sequence[float] | np.ndarray, y: Sequence[float] | np.ndarray) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.shape[0] < 2:
        raise EmptyInput("need at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(dx @ dx)
    sy = float(dy @ dy)
    if sx == 0.0 or sy == 0.0:
        raise ZeroVariance("constant input")
    r = float(dx @ dy) / math.sqrt(sx * sy)
    return min(max(r, -1.0), 1.0)


@dataclass(frozen=True)
class PerformanceRow:
    """Per-target measurements entering the correlation analysis."""

    jsd_mean: float
    cosine_mean: float
    auroc: float
    auroc_drop: float
    balanced_accuracy: float | None = None


@dataclass(frozen=True)
class PerformanceTable:
    """rows: (target abbrev, diagnosis) -> PerformanceRow."""

    rows: Mapping[tuple[str, Diagnosis], PerformanceRow]

    def targets(self, diagnosis: Diagnosis) -> list[str]:
        return sorted(t for (t, d) in self.rows if d is diagnosis)


@dataclass(frozen=True)
class CorrelationMatrix:
    variables: tuple[str, ...]
    matrix: np.ndarray
    n_targets: int

    def value(self, a: str, b: str) -> float:
        return float(self.matrix[self.variables.index(a), self.variables.index(b)])


def correlation_matrix(table: PerformanceTable, diagnosis: Diagnosis) -> CorrelationMatrix:
    """Pairwise Pearson correlations of (jsd, cosine, auroc_drop) across targets."""
    targets = table.targets(diagnosis)
    if len(targets) < 2:
        raise EmptyInput(f"need >= 2 targets for {diagnosis.value}, got {len(targets)}")
    series = {
        "jsd": [table.rows[(t, diagnosis)].jsd_mean for t in targets],
        "cosine": [table.rows[(t, diagnosis)].cosine_mean for t in targets],
        "auroc_drop": [table.rows[(t, diagnosis)].auroc_drop for t in targets],
    }
    k = len(CORRELATION_VARIABLES)
    matrix = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            r = pearson(series[CORRELATION_VARIABLES[i]], series[CORRELATION_VARIABLES[j]])
            matrix[i, j] = matrix[j, i] = r
    return CorrelationMatrix(
        variables=CORRELATION_VARIABLES, matrix=matrix, n_targets=len(targets)
    )


def correlation_report_json(matrices: Mapping[str, CorrelationMatrix]) -> str:
    """Correlation JSON keyed by class name."""
    payload = {
        cls: {
            "variables": list(m.variables),
            "matrix": [[round(float(v), 9) for v in row] for row in m.matrix],
            "n_targets": m.n_targets,
        }
        for cls, m in sorted(matrices.items())
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


PREDICTIONS_CSV_COLUMNS = ("image_id", "score", "label")


def write_predictions_csv(predictions: PredictionSet) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PREDICTIONS_CSV_COLUMNS)
    for image_id, score, label in zip(predictions.ids, predictions.scores, predictions.labels):
        writer.writerow([image_id, format(float(score), ".9g"), int(label)])
    return buf.getvalue()


def read_predictions_csv(text: str) -> PredictionSet:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise EmptyInput("empty predictions CSV")
    try:
        parsed = [(r["image_id"], float(r["score"]), int(r["label"])) for r in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad predictions CSV: {exc}") from None
    return PredictionSet.from_rows(parsed)
