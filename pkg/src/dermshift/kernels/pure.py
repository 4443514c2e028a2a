"""NumPy/SciPy implementations of the hot kernels.

This is the fallback path used when the compiled extension is not built
(or when DERMSHIFT_PURE=1). Semantics match dermshift.kernels._native;
the two paths may differ in the last floating-point bits because they
accumulate in different orders.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

LAPLACIAN_3X3 = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def _xlog2x(x: np.ndarray) -> np.ndarray:
    # 0 * log2(0) := 0
    safe = np.where(x > 0.0, x, 1.0)
    return x * np.log2(safe)


def _entropy2(hists: np.ndarray) -> np.ndarray:
    """Shannon entropy in bits along the last (bin) axis."""
    return -_xlog2x(hists).sum(axis=-1)


def jsd_pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs Jensen-Shannon divergence between two histogram stacks.

    a: (na, channels, bins), b: (nb, channels, bins), rows normalized per
    channel. Returns (na, nb) with the per-pair channel-mean JSD, base-2
    logs, so values live in [0, 1].

    Uses JSD(p, q) = H(m) - (H(p) + H(q)) / 2 with m the midpoint mixture;
    the two stack entropies are hoisted out of the pair loop.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    na, channels, bins = a.shape
    nb = b.shape[0]
    ent_a = _entropy2(a)
    ent_b = _entropy2(b)
    out = np.empty((na, nb), dtype=np.float64)
    # chunk rows of `a` to keep the (chunk, nb, channels, bins) mixture
    # temporaries bounded (~32 MB)
    chunk = max(1, int(4_000_000 / max(1, nb * channels * bins)))
    for i0 in range(0, na, chunk):
        i1 = min(na, i0 + chunk)
        m = 0.5 * (a[i0:i1, None, :, :] + b[None, :, :, :])
        ent_m = -_xlog2x(m).sum(axis=-1)
        jsd = ent_m - 0.5 * (ent_a[i0:i1, None, :] + ent_b[None, :, :])
        out[i0:i1] = jsd.mean(axis=-1)
    np.clip(out, 0.0, 1.0, out=out)
    return out


def laplacian_variance(v: np.ndarray) -> float:
    """Population variance of the 3x3 Laplacian response of a 2-D field.

    Border pixels are handled by edge replication, so constant fields give
    exactly zero.
    """
    v = np.asarray(v, dtype=np.float64)
    response = ndimage.correlate(v, LAPLACIAN_3X3, mode="nearest")
    return float(response.var())


def tsne_kl_grad(p: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact KL(P||Q) (natural log) and its gradient for a t-SNE layout.

    p: (n, n) symmetric joint distribution with zero diagonal; y: (n, 2).
    Q uses the Student-t kernel with one degree of freedom. Pairwise
    distances come from explicit coordinate differences so the objective
    is exactly invariant under translation of y.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    chunk = max(1, int(4_000_000 / max(1, n)))

    z = 0.0
    for i0 in range(0, n, chunk):
        i1 = min(n, i0 + chunk)
        diff = y[i0:i1, None, :] - y[None, :, :]
        num = 1.0 / (1.0 + np.einsum("ijk,ijk->ij", diff, diff))
        for i in range(i0, i1):
            num[i - i0, i] = 0.0
        z += float(num.sum())

    kl = 0.0
    grad = np.empty_like(y)
    for i0 in range(0, n, chunk):
        i1 = min(n, i0 + chunk)
        diff = y[i0:i1, None, :] - y[None, :, :]
        num = 1.0 / (1.0 + np.einsum("ijk,ijk->ij", diff, diff))
        for i in range(i0, i1):
            num[i - i0, i] = 0.0
        q = num / z
        pb = p[i0:i1]
        mask = pb > 0.0
        if mask.any():
            kl += float(np.sum(pb[mask] * (np.log(pb[mask]) - np.log(q[mask]))))
        w = (pb - q) * num
        grad[i0:i1] = 4.0 * (w.sum(axis=1)[:, None] * y[i0:i1] - w @ y)
    return kl, grad


def cosine_pairwise(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """All-pairs cosine similarity between row sets (nu, d) and (nv, d).

    A normalized matrix product; BLAS already runs this compiled, so both
    kernel backends share this implementation.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    un = u / np.linalg.norm(u, axis=1, keepdims=True)
    vn = v / np.linalg.norm(v, axis=1, keepdims=True)
    out = un @ vn.T
    np.clip(out, -1.0, 1.0, out=out)
    return out
