"""Exact t-SNE for 2-D projection of embeddings.

Exact O(n^2) variant: per-point Gaussian bandwidths found by binary
search so each conditional distribution hits the target perplexity,
symmetrized joint P, Student-t (1 d.o.f.) low-dimensional kernel, and
gradient descent with gains-based adaptive learning rates, momentum
switching and early exaggeration. Inputs above a point cap are
subsampled deterministically. The KL objective is reported in nats on
the un-exaggerated P.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels
from .embeddings import EmbeddingMatrix
from .errors import (
    DataError,
    DegenerateDistances,
    InfeasiblePerplexity,
    NonFiniteValue,
)

logger = logging.getLogger(__name__)

PERPLEXITY_TOL = 1e-3
PERPLEXITY_MAX_ITER = 64
P_SUM_ATOL = 1e-9


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch_iter: int = 250
    min_gain: float = 0.01
    init_scale: float = 1e-4
    max_points: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.perplexity <= 1.0:
            raise DataError(f"perplexity must exceed 1, got {self.perplexity}")
        if self.iterations < 1:
            raise DataError(f"iterations must be >= 1, got {self.iterations}")
        if self.max_points < 4:
            raise DataError(f"max_points must be >= 4, got {self.max_points}")


@dataclass(frozen=True)
class Projection:
    ids: tuple[str, ...]
    coords: np.ndarray
    final_kl: float
    perplexity_converged: bool


def perplexity_search(
    sq_distances: np.ndarray,
    target: float,
    tol: float = PERPLEXITY_TOL,
    max_iter: int = PERPLEXITY_MAX_ITER,
) -> tuple[float, bool]:
    """Gaussian sigma for one point such that 2^H(P) matches the target.

    sq_distances holds squared distances to the other n-1 points. The
    search runs on beta = 1/(2 sigma^2) and stops when the realized
    perplexity is within relative tol of the target; the flag reports
    convergence. target >= n (with n = len + 1 points) is infeasible.
    """
    d = np.asarray(sq_distances, dtype=np.float64)
    if d.ndim != 1 or d.shape[0] < 1:
        raise DegenerateDistances("need at least one neighbor distance")
    if not (d > 0).any():
        raise DegenerateDistances("all neighbor distances are zero")
    if target >= d.shape[0] + 1:
        raise InfeasiblePerplexity(f"perplexity {target} >= n = {d.shape[0] + 1}")

    # Shifting distances by their minimum rescales all weights equally,
    # leaving P and the realized perplexity unchanged.
    d = d - d.min()
    beta, beta_min, beta_max = 1.0, 0.0, math.inf
    best_beta, best_err = beta, math.inf
    converged = False
    for _ in range(max_iter):
        w = np.exp(-d * beta)
        z = float(w.sum())
        if z <= 0.0:
            perp = 1.0
        else:
            # H in bits: log2(z) + beta * E[d] / ln 2
            h = math.log2(z) + beta * float((w @ d)) / (z * math.log(2.0))
            perp = 2.0**h
        err = abs(perp - target)
        if err < best_err:
            best_err, best_beta = err, beta
        if err <= tol * target:
            converged = True
            break
        if perp > target:
            beta_min = beta
            beta = beta * 2.0 if math.isinf(beta_max) else 0.5 * (beta + beta_max)
        else:
            beta_max = beta
            beta = 0.5 * (beta + beta_min)
    sigma = math.sqrt(0.5 / best_beta)
    return sigma, converged


def _squared_distances(x: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances via explicit differences."""
    n = x.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    chunk = max(1, int(2_000_000 / max(n, 1)))
    for i0 in range(0, n, chunk):
        i1 = min(i0 + chunk, n)
        diff = x[i0:i1, None, :] - x[None, :, :]
        out[i0:i1] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def joint_probabilities(
    sq_distances: np.ndarray, perplexity: float
) -> tuple[np.ndarray, bool]:
    """Symmetrized joint P from squared distances; sums to 1.

    Returns (P, all_rows_converged).
    """
    n = sq_distances.shape[0]
    cond = np.zeros((n, n), dtype=np.float64)
    all_converged = True
    others = np.arange(n)
    for i in range(n):
        mask = others != i
        di = sq_distances[i, mask]
        sigma, ok = perplexity_search(di, perplexity)
        all_converged = all_converged and ok
        beta = 0.5 / (sigma * sigma)
        w = np.exp(-(di - di.min()) * beta)
        cond[i, mask] = w / w.sum()
    p = (cond + cond.T) / (2.0 * n)
    total = float(p.sum())
    if abs(total - 1.0) > P_SUM_ATOL:
        p = p / total
    return p, all_converged


def kl_and_gradient(p: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(P || Q) in nats and its gradient for the Student-t kernel."""
    return kernels.tsne_kl_grad(p, y)


def tsne(
    embeddings: EmbeddingMatrix,
    config: TsneConfig = TsneConfig(),
    callback: Callable[[int, float], None] | None = None,
) -> Projection:
    """Project embedding rows to 2-D. Deterministic given config.seed."""
    if embeddings.n < 4:
        raise DataError(f"need at least 4 points, got {embeddings.n}")
    ids = embeddings.ids
    x = embeddings.values
    if embeddings.n > config.max_points:
        rng = np.random.default_rng([config.seed, 101])
        keep = np.sort(rng.choice(embeddings.n, size=config.max_points, replace=False))
        ids = tuple(ids[i] for i in keep)
        x = x[keep]
        logger.info("t-SNE input capped from %d to %d points", embeddings.n, config.max_points)
    n = x.shape[0]
    if config.perplexity >= n:
        raise InfeasiblePerplexity(f"perplexity {config.perplexity} >= n = {n}")

    p, converged = joint_probabilities(_squared_distances(x), config.perplexity)
    if not converged:
        logger.warning("perplexity search did not converge for every point")

    rng = np.random.default_rng([config.seed])
    y = rng.normal(0.0, config.init_scale, size=(n, 2))
    update = np.zeros_like(y)
    gains = np.ones_like(y)

    for it in range(config.iterations):
        p_eff = p * config.early_exaggeration if it < config.exaggeration_iters else p
        kl, grad = kernels.tsne_kl_grad(p_eff, y)
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.clip(gains, config.min_gain, None, out=gains)
        momentum = (
            config.momentum_early if it < config.momentum_switch_iter else config.momentum_late
        )
        update = momentum * update - config.learning_rate * (gains * grad)
        y = y + update
        if not np.isfinite(y).all():
            raise NonFiniteValue(f"t-SNE diverged at iteration {it}")
        if callback is not None:
            callback(it, kl)

    final_kl, _ = kernels.tsne_kl_grad(p, y)
    return Projection(ids=ids, coords=y, final_kl=float(final_kl), perplexity_converged=converged)


PROJECTION_CSV_COLUMNS = ("image_id", "x", "y", "dataset", "class")


def write_projection_csv(
    projection: Projection,
    dataset_of: Mapping[str, str],
    class_of: Mapping[str, str],
) -> str:
    """Projection CSV: image_id, x, y, dataset, class."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PROJECTION_CSV_COLUMNS)
    for image_id, (cx, cy) in zip(projection.ids, projection.coords):
        writer.writerow(
            [
                image_id,
                format(float(cx), ".9g"),
                format(float(cy), ".9g"),
                dataset_of.get(image_id, ""),
                class_of.get(image_id, ""),
            ]
        )
    return buf.getvalue()


def read_projection_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
