# Compiled implementations of the hot kernels. Semantics are documented
# on the pure-NumPy twins in dermshift.kernels.pure.

import numpy as np

cimport numpy as cnp
from libc.math cimport log, log2

cnp.import_array()


def jsd_pairwise(double[:, :, ::1] a, double[:, :, ::1] b):
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0]
    cdef Py_ssize_t channels = a.shape[1], bins = a.shape[2]
    cdef Py_ssize_t i, j, c, k
    cdef double m, ent_m, jsd, x

    ent_a_arr = np.zeros((na, channels), dtype=np.float64)
    ent_b_arr = np.zeros((nb, channels), dtype=np.float64)
    cdef double[:, ::1] ent_a = ent_a_arr
    cdef double[:, ::1] ent_b = ent_b_arr

    for i in range(na):
        for c in range(channels):
            x = 0.0
            for k in range(bins):
                if a[i, c, k] > 0.0:
                    x -= a[i, c, k] * log2(a[i, c, k])
            ent_a[i, c] = x
    for j in range(nb):
        for c in range(channels):
            x = 0.0
            for k in range(bins):
                if b[j, c, k] > 0.0:
                    x -= b[j, c, k] * log2(b[j, c, k])
            ent_b[j, c] = x

    out_arr = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(na):
        for j in range(nb):
            jsd = 0.0
            for c in range(channels):
                ent_m = 0.0
                for k in range(bins):
                    m = 0.5 * (a[i, c, k] + b[j, c, k])
                    if m > 0.0:
                        ent_m -= m * log2(m)
                jsd += ent_m - 0.5 * (ent_a[i, c] + ent_b[j, c])
            jsd /= channels
            if jsd < 0.0:
                jsd = 0.0
            elif jsd > 1.0:
                jsd = 1.0
            out[i, j] = jsd
    return out_arr


def laplacian_variance(double[:, ::1] v):
    cdef Py_ssize_t h = v.shape[0], w = v.shape[1]
    cdef Py_ssize_t i, j, iu, id_, jl, jr
    cdef double r, total = 0.0, mean, acc = 0.0
    cdef Py_ssize_t npix = h * w

    # two passes (mean, then variance) to avoid cancellation near zero
    for i in range(h):
        iu = i - 1 if i > 0 else 0
        id_ = i + 1 if i < h - 1 else h - 1
        for j in range(w):
            jl = j - 1 if j > 0 else 0
            jr = j + 1 if j < w - 1 else w - 1
            total += v[iu, j] + v[id_, j] + v[i, jl] + v[i, jr] - 4.0 * v[i, j]
    mean = total / npix
    for i in range(h):
        iu = i - 1 if i > 0 else 0
        id_ = i + 1 if i < h - 1 else h - 1
        for j in range(w):
            jl = j - 1 if j > 0 else 0
            jr = j + 1 if j < w - 1 else w - 1
            r = v[iu, j] + v[id_, j] + v[i, jl] + v[i, jr] - 4.0 * v[i, j]
            acc += (r - mean) * (r - mean)
    return acc / npix


def tsne_kl_grad(double[:, ::1] p, double[:, ::1] y):
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, num, z = 0.0, logz, kl = 0.0, w, gx, gy

    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dx = y[i, 0] - y[j, 0]
            dy = y[i, 1] - y[j, 1]
            z += 1.0 / (1.0 + dx * dx + dy * dy)
    logz = log(z)

    grad_arr = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    for i in range(n):
        gx = 0.0
        gy = 0.0
        for j in range(n):
            if i == j:
                continue
            dx = y[i, 0] - y[j, 0]
            dy = y[i, 1] - y[j, 1]
            num = 1.0 / (1.0 + dx * dx + dy * dy)
            if p[i, j] > 0.0:
                kl += p[i, j] * (log(p[i, j]) - log(num) + logz)
            w = (p[i, j] - num / z) * num
            gx += w * dx
            gy += w * dy
        grad[i, 0] = 4.0 * gx
        grad[i, 1] = 4.0 * gy
    return kl, grad_arr
