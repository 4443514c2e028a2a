"""Distribution divergence between datasets, with bootstrap resampling.

Image-space distance is the Jensen-Shannon divergence (base-2 logs, so
values live in [0, 1]) between per-channel 256-bin pixel histograms,
averaged over the three channels. Embedding-space similarity is cosine
similarity. A dataset-level comparison is the mean of the metric over
all cross pairs.

The bootstrap protocol draws, per iteration, a fixed-size sample with
replacement from each side (per class) and records the pairwise mean;
iteration i uses its own RNG stream seeded by (seed, i), so any one
iteration can be reproduced without replaying the others. Sampling with
replacement also means sample_size may exceed a class's population.

The pairwise mean over a resampled multiset equals a multiplicity-
weighted mean over unique members, so each iteration evaluates the
metric kernel only on distinct rows (or slices a precomputed full pair
matrix when the group is small enough for that to be cheaper). Both
routes compute identical per-pair values and reduce them in the same
order, so the choice does not affect results.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .embeddings import EmbeddingMatrix
from .errors import (
    DataError,
    DimMismatch,
    EmptyClass,
    EmptyInput,
    NotADistribution,
    ZeroVector,
)
from .grouping import GroupedDataset, members_by_class
from .imagestats import RgbImage
from .metadata import Catalog, Diagnosis

HIST_BINS = 256
DISTRIBUTION_ATOL = 1e-9


class MetricKind(Enum):
    JSD = "jsd"
    COSINE = "cosine"


@dataclass(frozen=True)
class PixelHistogram:
    """Per-channel pixel value distribution, shape (3, 256), rows sum to 1."""

    bins: np.ndarray

    def __post_init__(self):
        arr = self.bins
        if arr.shape != (3, HIST_BINS):
            raise NotADistribution(f"expected (3, {HIST_BINS}), got {arr.shape}")
        if (arr < 0).any():
            raise NotADistribution("negative mass")
        if not np.allclose(arr.sum(axis=1), 1.0, rtol=0.0, atol=DISTRIBUTION_ATOL):
            raise NotADistribution("rows must sum to 1")


def histogram(image: RgbImage) -> PixelHistogram:
    """Normalized 256-bin histogram per RGB channel."""
    npix = image.height * image.width
    bins = np.empty((3, HIST_BINS), dtype=np.float64)
    for c in range(3):
        counts = np.bincount(image.pixels[..., c].reshape(-1), minlength=HIST_BINS)
        bins[c] = counts / npix
    return PixelHistogram(bins)


def _check_distribution(p: np.ndarray, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise NotADistribution(f"{name} must be 1-D")
    if (p < 0).any():
        raise NotADistribution(f"{name} has negative mass")
    if abs(p.sum() - 1.0) > DISTRIBUTION_ATOL:
        raise NotADistribution(f"{name} sums to {p.sum()!r}, not 1")
    return p


def jsd(p: Sequence[float] | np.ndarray, q: Sequence[float] | np.ndarray) -> float:
    """Jensen-Shannon divergence in bits; symmetric, in [0, 1], 0 log 0 = 0."""
    p = _check_distribution(p, "p")
    q = _check_distribution(q, "q")
    if p.shape != q.shape:
        raise DimMismatch(f"length mismatch: {p.shape[0]} vs {q.shape[0]}")
    m = 0.5 * (p + q)
    # sum p*log2(p/m) over the support of p; m > 0 wherever p > 0
    pk = p > 0
    qk = q > 0
    kl_pm = float(np.sum(p[pk] * np.log2(p[pk] / m[pk])))
    kl_qm = float(np.sum(q[qk] * np.log2(q[qk] / m[qk])))
    return min(max(0.5 * kl_pm + 0.5 * kl_qm, 0.0), 1.0)


def cosine(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity in [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or v.ndim != 1:
        raise DimMismatch("vectors must be 1-D")
    if u.shape != v.shape:
        raise DimMismatch(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for a zero vector")
    return min(max(float(u @ v) / (nu * nv), -1.0), 1.0)


def _hist_stack(hists: Sequence[PixelHistogram] | np.ndarray) -> np.ndarray:
    if isinstance(hists, np.ndarray):
        arr = hists
    else:
        if len(hists) == 0:
            raise EmptyInput("no histograms")
        arr = np.stack([h.bins for h in hists])
    if arr.ndim != 3 or arr.shape[1] != 3 or arr.shape[2] != HIST_BINS:
        raise NotADistribution(f"expected (n, 3, {HIST_BINS}), got {arr.shape}")
    return np.ascontiguousarray(arr, dtype=np.float64)


def _embed_stack(rows: np.ndarray) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 2:
        raise DimMismatch(f"expected (n, d) embeddings, got ndim={arr.ndim}")
    if arr.shape[0] == 0:
        raise EmptyInput("no embedding rows")
    norms = np.linalg.norm(arr, axis=1)
    if (norms == 0.0).any():
        raise ZeroVector("embedding stack contains a zero row")
    return arr


def _pair_matrix(a: np.ndarray, b: np.ndarray, metric: MetricKind) -> np.ndarray:
    if metric is MetricKind.JSD:
        return kernels.jsd_pairwise(a, b)
    return kernels.cosine_pairwise(a, b)


def _weighted_cross_mean(matrix: np.ndarray, wa: np.ndarray, wb: np.ndarray) -> float:
    return float(wa @ (matrix @ wb)) / (float(wa.sum()) * float(wb.sum()))


def pairwise_metric(set_a, set_b, metric: MetricKind) -> float:
    """Mean metric over all |A| x |B| cross pairs.

    For JSD, inputs are histogram stacks; per-pair values are the mean
    JSD over the three channels. For cosine, inputs are embedding rows.
    """
    if metric is MetricKind.JSD:
        a, b = _hist_stack(set_a), _hist_stack(set_b)
    else:
        a, b = _embed_stack(set_a), _embed_stack(set_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptyInput("empty side")
    matrix = _pair_matrix(a, b, metric)
    ones_a = np.ones(a.shape[0], dtype=np.float64)
    ones_b = np.ones(b.shape[0], dtype=np.float64)
    return _weighted_cross_mean(matrix, ones_a, ones_b)


@dataclass(frozen=True)
class BootstrapConfig:
    iterations: int = 30
    sample_size: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise DataError(f"iterations must be >= 1, got {self.iterations}")
        if self.sample_size < 2:
            raise DataError(f"sample_size must be >= 2, got {self.sample_size}")


@dataclass(frozen=True)
class DivergenceInputs:
    """Feature lookups for bootstrap comparisons.

    histograms maps image_id -> (3, 256) array (or PixelHistogram) for
    JSD; embeddings provides rows for cosine. Only the side needed by
    the requested metric must be present.
    """

    catalog: Catalog
    histograms: Mapping[str, np.ndarray] | None = None
    embeddings: EmbeddingMatrix | None = None


@dataclass(frozen=True)
class DivergenceSummary:
    metric: MetricKind
    source: str
    target: str
    diagnosis: Diagnosis
    sample_size: int
    values: tuple[float, ...]
    mean: float
    median: float
    std: float

    @classmethod
    def from_values(
        cls,
        metric: MetricKind,
        source: str,
        target: str,
        diagnosis: Diagnosis,
        sample_size: int,
        values: Sequence[float],
    ) -> "DivergenceSummary":
        arr = np.asarray(values, dtype=np.float64)
        return cls(
            metric=metric,
            source=source,
            target=target,
            diagnosis=diagnosis,
            sample_size=sample_size,
            values=tuple(float(v) for v in arr),
            mean=float(arr.mean()),
            median=float(np.median(arr)),
            std=float(arr.std()),
        )


def _class_features(
    group: GroupedDataset, diagnosis: Diagnosis, metric: MetricKind, inputs: DivergenceInputs
) -> np.ndarray:
    ids = sorted(members_by_class(group, inputs.catalog)[diagnosis])
    if not ids:
        raise EmptyClass(f"{group.abbrev} has no {diagnosis.value} members")
    if metric is MetricKind.JSD:
        if inputs.histograms is None:
            raise DataError("JSD bootstrap needs histograms")
        missing = [i for i in ids if i not in inputs.histograms]
        if missing:
            raise DataError(f"missing histograms for {len(missing)} ids (first: {missing[0]})")
        rows = []
        for i in ids:
            h = inputs.histograms[i]
            rows.append(h.bins if isinstance(h, PixelHistogram) else np.asarray(h))
        return _hist_stack(np.stack(rows))
    if inputs.embeddings is None:
        raise DataError("cosine bootstrap needs embeddings")
    index = inputs.embeddings.index_of()
    missing = [i for i in ids if i not in index]
    if missing:
        raise DataError(f"missing embeddings for {len(missing)} ids (first: {missing[0]})")
    return _embed_stack(inputs.embeddings.select(tuple(ids)))


def _expected_unique(n: int, sample_size: int) -> float:
    return n * (1.0 - (1.0 - 1.0 / n) ** sample_size)


def bootstrap_divergence(
    source: GroupedDataset,
    target: GroupedDataset,
    diagnosis: Diagnosis,
    metric: MetricKind,
    config: BootstrapConfig,
    inputs: DivergenceInputs,
) -> DivergenceSummary:
    """Bootstrap the pairwise metric between two datasets for one class."""
    feats_a = _class_features(source, diagnosis, metric, inputs)
    feats_b = _class_features(target, diagnosis, metric, inputs)
    na, nb = feats_a.shape[0], feats_b.shape[0]

    est_pairs = _expected_unique(na, config.sample_size) * _expected_unique(nb, config.sample_size)
    precompute = na * nb <= config.iterations * est_pairs
    full = _pair_matrix(feats_a, feats_b, metric) if precompute else None

    values = []
    for i in range(config.iterations):
        rng = np.random.default_rng([config.seed, i])
        idx_a = rng.integers(0, na, size=config.sample_size)
        idx_b = rng.integers(0, nb, size=config.sample_size)
        ua, wa = np.unique(idx_a, return_counts=True)
        ub, wb = np.unique(idx_b, return_counts=True)
        wa = wa.astype(np.float64)
        wb = wb.astype(np.float64)
        if full is not None:
            sub = full[np.ix_(ua, ub)]
        else:
            sub = _pair_matrix(feats_a[ua], feats_b[ub], metric)
        values.append(_weighted_cross_mean(sub, wa, wb))

    return DivergenceSummary.from_values(
        metric, source.abbrev, target.abbrev, diagnosis, config.sample_size, values
    )


def sample_size_sweep(
    source: GroupedDataset,
    target: GroupedDataset,
    diagnosis: Diagnosis,
    metric: MetricKind,
    sizes: Sequence[int],
    config: BootstrapConfig,
    inputs: DivergenceInputs,
) -> dict[int, DivergenceSummary]:
    """Bootstrap once per sample size, sharing the iteration seed schedule."""
    if len(sizes) == 0:
        raise EmptyInput("no sweep sizes")
    out: dict[int, DivergenceSummary] = {}
    for size in sizes:
        cfg = replace(config, sample_size=size)
        out[size] = bootstrap_divergence(source, target, diagnosis, metric, cfg, inputs)
    return out


ITERATIONS_CSV_COLUMNS = ("metric", "source", "target", "class", "sample_size", "iteration", "value")
SUMMARY_CSV_COLUMNS = ("metric", "source", "target", "class", "sample_size", "mean", "median", "std")


def write_iterations_csv(summaries: Sequence[DivergenceSummary]) -> str:
    """Per-iteration bootstrap values, one row per (comparison, iteration)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ITERATIONS_CSV_COLUMNS)
    for s in summaries:
        for i, value in enumerate(s.values):
            writer.writerow(
                [s.metric.value, s.source, s.target, s.diagnosis.value, s.sample_size, i, format(value, ".9g")]
            )
    return buf.getvalue()


def write_summary_csv(summaries: Sequence[DivergenceSummary]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_CSV_COLUMNS)
    for s in summaries:
        writer.writerow(
            [
                s.metric.value,
                s.source,
                s.target,
                s.diagnosis.value,
                s.sample_size,
                format(s.mean, ".9g"),
                format(s.median, ".9g"),
                format(s.std, ".9g"),
            ]
        )
    return buf.getvalue()


def read_summary_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
