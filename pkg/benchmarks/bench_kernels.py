"""Benchmark the compiled kernels against the NumPy fallback.

Runs each hot kernel on representative problem sizes with both
implementations, reports wall time per call and the speedup, and
cross-checks that the two backends agree numerically.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dermshift.kernels import pure

try:
    from dermshift.kernels import _native
except ImportError:
    _native = None


def best_of(repeats: int, fn, *args) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def max_dev(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def bench_jsd(rng, repeats):
    for na, nb in ((50, 50), (200, 200), (450, 450)):
        a = rng.dirichlet(np.ones(256), size=(na, 3))
        b = rng.dirichlet(np.ones(256), size=(nb, 3))
        a = np.ascontiguousarray(a)
        b = np.ascontiguousarray(b)
        t_pure = best_of(repeats, pure.jsd_pairwise, a, b)
        if _native is None:
            yield f"jsd_pairwise {na}x{nb}", t_pure, None, None
        else:
            t_native = best_of(repeats, _native.jsd_pairwise, a, b)
            dev = max_dev(pure.jsd_pairwise(a, b), _native.jsd_pairwise(a, b))
            yield f"jsd_pairwise {na}x{nb}", t_pure, t_native, dev


def bench_laplacian(rng, repeats):
    for size in (64, 224, 512):
        v = np.ascontiguousarray(rng.random((size, size)))
        t_pure = best_of(repeats, pure.laplacian_variance, v)
        if _native is None:
            yield f"laplacian_variance {size}x{size}", t_pure, None, None
        else:
            t_native = best_of(repeats, _native.laplacian_variance, v)
            dev = abs(pure.laplacian_variance(v) - _native.laplacian_variance(v))
            yield f"laplacian_variance {size}x{size}", t_pure, t_native, dev


def bench_tsne(rng, repeats):
    for n in (100, 500, 1000):
        raw = rng.random((n, n))
        raw = raw + raw.T
        np.fill_diagonal(raw, 0.0)
        p = np.ascontiguousarray(raw / raw.sum())
        y = np.ascontiguousarray(rng.normal(size=(n, 2)))
        t_pure = best_of(repeats, pure.tsne_kl_grad, p, y)
        if _native is None:
            yield f"tsne_kl_grad n={n}", t_pure, None, None
        else:
            t_native = best_of(repeats, _native.tsne_kl_grad, p, y)
            kl_p, grad_p = pure.tsne_kl_grad(p, y)
            kl_n, grad_n = _native.tsne_kl_grad(p, y)
            dev = max(abs(kl_p - kl_n), max_dev(grad_p, grad_n))
            yield f"tsne_kl_grad n={n}", t_pure, t_native, dev


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5, help="best-of-N timing")
    args = parser.parse_args()

    if _native is None:
        print("compiled extension not available; timing the NumPy fallback only\n")
    rng = np.random.default_rng(0)

    header = f"{'kernel':<34} {'pure':>10} {'native':>10} {'speedup':>8} {'max dev':>10}"
    print(header)
    print("-" * len(header))
    for bench in (bench_jsd, bench_laplacian, bench_tsne):
        for name, t_pure, t_native, dev in bench(rng, args.repeats):
            if t_native is None:
                print(f"{name:<34} {t_pure * 1e3:>8.2f}ms {'-':>10} {'-':>8} {'-':>10}")
            else:
                print(
                    f"{name:<34} {t_pure * 1e3:>8.2f}ms {t_native * 1e3:>8.2f}ms "
                    f"{t_pure / t_native:>7.1f}x {dev:>10.1e}"
                )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
