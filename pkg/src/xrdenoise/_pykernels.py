"""NumPy reference versions of the compiled kernels in ``_ckernels.pyx``.

Every function performs the same floating-point operations in the same order
as its compiled twin, so both backends produce bit-identical results.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

POISSON_SWITCH = 30.0
POISSON_KMAX = 1000


def im2col(xpad, kh, kw):
    """Unfold ``(N, C, Hp, Wp)`` into ``(C*kh*kw, N*H*W)`` patch columns."""
    n_img, n_ch = xpad.shape[:2]
    h = xpad.shape[2] - kh + 1
    w = xpad.shape[3] - kw + 1
    win = sliding_window_view(xpad, (kh, kw), axis=(2, 3))  # N, C, H, W, kh, kw
    return np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(
        n_ch * kh * kw, n_img * h * w
    )


def col2im(cols, n_img, n_ch, h, w, kh, kw):
    """Adjoint of :func:`im2col`: scatter-add columns into a padded image."""
    out = np.zeros((n_img, n_ch, h + kh - 1, w + kw - 1), dtype=cols.dtype)
    view = cols.reshape(n_ch, kh, kw, n_img, h, w).transpose(3, 0, 1, 2, 4, 5)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + h, j : j + w] += view[:, :, i, j]
    return out


def poisson_sample(mean, u, z):
    mean = np.asarray(mean, dtype=np.float64)
    out = np.empty_like(mean)

    small = mean < POISSON_SWITCH
    lam = mean[small]
    us = u[small]
    k = np.zeros_like(lam)
    p = np.exp(-lam)
    cdf = p.copy()
    active = us > cdf
    while active.any():
        idx = np.flatnonzero(active)
        k[idx] += 1.0
        p[idx] *= lam[idx] / k[idx]
        cdf[idx] += p[idx]
        active[idx] = (us[idx] > cdf[idx]) & (k[idx] < POISSON_KMAX)
    out[small] = k

    big = ~small
    lam = mean[big]
    v = np.floor(lam + np.sqrt(lam) * z[big] + 0.5)
    out[big] = np.where(v > 0.0, v, 0.0)
    return out


def correlate2d_padded(padded, kernel):
    kh, kw = kernel.shape
    h = padded.shape[0] - kh + 1
    w = padded.shape[1] - kw + 1
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out += kernel[i, j] * padded[i : i + h, j : j + w]
    return out
