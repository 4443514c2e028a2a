"""Hot numeric kernels with a compiled core and a NumPy fallback.

The compiled extension (Cython) is picked at import time when present;
set DERMSHIFT_PURE=1 to force the NumPy path. `BACKEND` reports which
one is active.

Each kernel routes to the fastest implementation that preserves the
documented semantics, so two of them ignore the backend: cosine
similarity is a BLAS matrix product either way, and pairwise JSD runs
on the NumPy path even when the extension is loaded, because that
kernel is bound by log evaluations and NumPy's SIMD log beats a scalar
loop (see benchmarks/bench_kernels.py; the compiled variant stays
available as the reference for that comparison). The Laplacian and
t-SNE kernels are where compiled loops win, and they dispatch on
BACKEND.
"""

from __future__ import annotations

import os

import numpy as np

from . import pure
from .pure import cosine_pairwise

_native = None
if os.environ.get("DERMSHIFT_PURE", "") != "1":
    try:
        from importlib import import_module

        _native = import_module(__name__ + "._native")
    except ImportError:
        _native = None

BACKEND = "native" if _native is not None else "pure"


def jsd_pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return pure.jsd_pairwise(a, b)


def laplacian_variance(v: np.ndarray) -> float:
    if _native is not None:
        return _native.laplacian_variance(np.ascontiguousarray(v, dtype=np.float64))
    return pure.laplacian_variance(v)


def tsne_kl_grad(p: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    if _native is not None:
        p = np.ascontiguousarray(p, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        return _native.tsne_kl_grad(p, y)
    return pure.tsne_kl_grad(p, y)


__all__ = [
    "BACKEND",
    "cosine_pairwise",
    "jsd_pairwise",
    "laplacian_variance",
    "tsne_kl_grad",
]
