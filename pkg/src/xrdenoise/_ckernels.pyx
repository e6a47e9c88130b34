# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Must stay bit-identical to ``_pykernels``."""

import numpy as np

from libc.math cimport exp, floor, sqrt

ctypedef fused real:
    float
    double

# Sequential-search inversion below this mean, rounded normal approximation above.
DEF POISSON_SWITCH = 30.0
DEF POISSON_KMAX = 1000


def im2col(real[:, :, :, ::1] xpad, int kh, int kw):
    cdef Py_ssize_t n_img = xpad.shape[0], n_ch = xpad.shape[1]
    cdef Py_ssize_t h = xpad.shape[2] - kh + 1, w = xpad.shape[3] - kw + 1
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((n_ch * kh * kw, n_img * h * w), dtype=dtype)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t n, c, i, j, y, x, row, col
    for c in range(n_ch):
        for i in range(kh):
            for j in range(kw):
                row = (c * kh + i) * kw + j
                for n in range(n_img):
                    col = n * h * w
                    for y in range(h):
                        for x in range(w):
                            out[row, col] = xpad[n, c, y + i, x + j]
                            col += 1
    return out_arr


def col2im(real[:, ::1] cols, Py_ssize_t n_img, Py_ssize_t n_ch,
           Py_ssize_t h, Py_ssize_t w, int kh, int kw):
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((n_img, n_ch, h + kh - 1, w + kw - 1), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n, c, i, j, y, x, row, col
    for n in range(n_img):
        for c in range(n_ch):
            for i in range(kh):
                for j in range(kw):
                    row = (c * kh + i) * kw + j
                    col = n * h * w
                    for y in range(h):
                        for x in range(w):
                            out[n, c, y + i, x + j] += cols[row, col]
                            col += 1
    return out_arr


def poisson_sample(double[::1] mean, double[::1] u, double[::1] z):
    cdef Py_ssize_t size = mean.shape[0], idx
    out_arr = np.empty(size, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double lam, p, cdf, k, v
    for idx in range(size):
        lam = mean[idx]
        if lam < POISSON_SWITCH:
            k = 0.0
            p = exp(-lam)
            cdf = p
            while u[idx] > cdf and k < POISSON_KMAX:
                k += 1.0
                p *= lam / k
                cdf += p
            out[idx] = k
        else:
            v = floor(lam + sqrt(lam) * z[idx] + 0.5)
            out[idx] = v if v > 0.0 else 0.0
    return out_arr


def correlate2d_padded(double[:, ::1] padded, double[:, ::1] kernel):
    cdef Py_ssize_t kh = kernel.shape[0], kw = kernel.shape[1]
    cdef Py_ssize_t h = padded.shape[0] - kh + 1, w = padded.shape[1] - kw + 1
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, y, x
    cdef double kv
    for i in range(kh):
        for j in range(kw):
            kv = kernel[i, j]
            for y in range(h):
                for x in range(w):
                    out[y, x] += kv * padded[y + i, x + j]
    return out_arr
