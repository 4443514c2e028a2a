"""Kernel correctness: compiled and fallback paths against brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import dermshift.kernels as kernels
from dermshift.kernels import pure

from .oracles import (
    cosine_brute,
    jsd_channels_brute,
    laplacian_variance_brute,
    tsne_grad_brute,
    tsne_kl_brute,
)

HAVE_NATIVE = kernels.BACKEND == "native"

needs_native = pytest.mark.skipif(not HAVE_NATIVE, reason="compiled extension unavailable")


def random_histograms(rng, n, channels=3, bins=16):
    raw = rng.random((n, channels, bins)) ** 3
    return raw / raw.sum(axis=2, keepdims=True)


# ---------------------------------------------------------------- jsd_pairwise


def test_jsd_pairwise_matches_brute(rng):
    a = random_histograms(rng, 4)
    b = random_histograms(rng, 3)
    got = pure.jsd_pairwise(a, b)
    assert got.shape == (4, 3)
    for i in range(4):
        for j in range(3):
            assert got[i, j] == pytest.approx(jsd_channels_brute(a[i], b[j]), abs=1e-12)


def test_jsd_pairwise_self_is_zero(rng):
    a = random_histograms(rng, 5)
    got = pure.jsd_pairwise(a, a)
    assert np.allclose(np.diag(got), 0.0, atol=1e-12)


def test_jsd_pairwise_disjoint_is_one():
    a = np.zeros((1, 3, 16))
    b = np.zeros((1, 3, 16))
    a[0, :, 0] = 1.0
    b[0, :, 1] = 1.0
    assert pure.jsd_pairwise(a, b)[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_jsd_pairwise_in_unit_interval(rng):
    a = random_histograms(rng, 6, bins=8)
    b = random_histograms(rng, 6, bins=8)
    got = pure.jsd_pairwise(a, b)
    assert (got >= 0.0).all() and (got <= 1.0).all()


def test_jsd_pairwise_handles_zero_bins():
    a = np.zeros((1, 3, 4))
    b = np.zeros((1, 3, 4))
    a[0, :, :2] = 0.5
    b[0, :, 1:3] = 0.5
    expected = jsd_channels_brute(a[0], b[0])
    assert pure.jsd_pairwise(a, b)[0, 0] == pytest.approx(expected, abs=1e-12)


@needs_native
def test_jsd_pairwise_native_matches_pure(rng):
    # the dispatcher always routes jsd to the NumPy path, so reach the
    # compiled reference implementation directly
    a = np.ascontiguousarray(random_histograms(rng, 8, bins=256))
    b = np.ascontiguousarray(random_histograms(rng, 7, bins=256))
    got_native = kernels._native.jsd_pairwise(a, b)
    got_pure = pure.jsd_pairwise(a, b)
    np.testing.assert_allclose(got_native, got_pure, rtol=1e-10, atol=1e-13)


# ---------------------------------------------------------- laplacian_variance


@given(
    arrays(
        np.float64,
        st.tuples(st.integers(3, 12), st.integers(3, 12)),
        elements=st.floats(0.0, 1.0, allow_nan=False),
    )
)
def test_laplacian_variance_matches_brute(v):
    assert pure.laplacian_variance(v) == pytest.approx(laplacian_variance_brute(v), abs=1e-12)


def test_laplacian_variance_constant_is_zero():
    v = np.full((16, 16), 0.37)
    assert pure.laplacian_variance(v) == pytest.approx(0.0, abs=1e-15)


def test_laplacian_variance_gradient_is_zero():
    # a linear ramp has a zero Laplacian away from edges and constant
    # response along them, so variance comes only from edge replication
    v = np.tile(np.linspace(0.0, 1.0, 10), (10, 1))
    assert pure.laplacian_variance(v) == pytest.approx(laplacian_variance_brute(v), abs=1e-14)


@needs_native
def test_laplacian_variance_native_matches_pure(rng):
    v = rng.random((64, 64))
    assert kernels.laplacian_variance(v) == pytest.approx(
        pure.laplacian_variance(v), rel=1e-12
    )


# ----------------------------------------------------------------- tsne_kl_grad


def joint_p(rng, n):
    raw = rng.random((n, n))
    raw = raw + raw.T
    np.fill_diagonal(raw, 0.0)
    return raw / raw.sum()


def test_tsne_kl_matches_brute(rng):
    p = joint_p(rng, 7)
    y = rng.normal(size=(7, 2))
    kl, _ = pure.tsne_kl_grad(p, y)
    assert kl == pytest.approx(tsne_kl_brute(p, y), rel=1e-12)


def test_tsne_grad_matches_brute(rng):
    p = joint_p(rng, 7)
    y = rng.normal(size=(7, 2))
    _, grad = pure.tsne_kl_grad(p, y)
    np.testing.assert_allclose(grad, tsne_grad_brute(p, y), rtol=1e-10, atol=1e-14)


def test_tsne_grad_sparse_p(rng):
    p = joint_p(rng, 6)
    p[p < np.median(p)] = 0.0
    p = p / p.sum()
    y = rng.normal(size=(6, 2))
    kl, grad = pure.tsne_kl_grad(p, y)
    assert kl == pytest.approx(tsne_kl_brute(p, y), rel=1e-12)
    np.testing.assert_allclose(grad, tsne_grad_brute(p, y), rtol=1e-10, atol=1e-14)


@needs_native
def test_tsne_kl_grad_native_matches_pure(rng):
    p = joint_p(rng, 25)
    y = rng.normal(size=(25, 2))
    kl_n, g_n = kernels.tsne_kl_grad(p, y)
    kl_p, g_p = pure.tsne_kl_grad(p, y)
    assert kl_n == pytest.approx(kl_p, rel=1e-12)
    np.testing.assert_allclose(g_n, g_p, rtol=1e-10, atol=1e-14)


# --------------------------------------------------------------- cosine_pairwise


def test_cosine_pairwise_matches_brute(rng):
    u = rng.normal(size=(5, 9))
    v = rng.normal(size=(4, 9))
    got = kernels.cosine_pairwise(u, v)
    for i in range(5):
        for j in range(4):
            assert got[i, j] == pytest.approx(cosine_brute(u[i], v[j]), abs=1e-12)


def test_cosine_pairwise_clipped(rng):
    u = rng.normal(size=(3, 4))
    got = kernels.cosine_pairwise(u, u)
    assert (got <= 1.0).all() and (got >= -1.0).all()
    assert np.allclose(np.diag(got), 1.0)


# ------------------------------------------------------------------- dispatch


def test_backend_reported():
    assert kernels.BACKEND in ("native", "pure")


def test_pure_override_env():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "import dermshift.kernels as k; print(k.BACKEND)"],
        capture_output=True,
        text=True,
        env={"PATH": "/usr/bin:/bin", "DERMSHIFT_PURE": "1"},
    )
    assert out.stdout.strip() == "pure"


@settings(max_examples=25)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(2, 10))
def test_jsd_pairwise_shapes(na, nb, bins):
    rng = np.random.default_rng(na * 100 + nb * 10 + bins)
    a = random_histograms(rng, na, bins=bins)
    b = random_histograms(rng, nb, bins=bins)
    assert pure.jsd_pairwise(a, b).shape == (na, nb)
