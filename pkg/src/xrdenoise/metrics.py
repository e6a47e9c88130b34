"""Image-quality measures and the MAE + MSSIM training loss.

MSSIM here uses whole-image statistics at every scale (no sliding window),
with 2x2 mean pooling between scales. Since the contrast and structure
exponents are equal at every scale, their product is evaluated in the
equivalent square-root-free form ``(2 cov + C2) / (var_x + var_y + C2)``,
which keeps the gradient finite for flat images. Negative structure terms
are clamped to zero.

All functions accept a single image ``(H, W)`` or a batch ``(..., H, W)``;
batched inputs return one value per image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
PSNR_CAP_DB = 200.0
MAE_NORMALIZATION = "mean"  # the loss divides the absolute-error sum by the pixel count


@dataclass(frozen=True)
class MssimParams:
    weights: tuple[float, ...] = MSSIM_WEIGHTS
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if abs(sum(self.weights) - 1.0) > 1e-3:
            raise ValueError("MSSIM weights must sum to 1")
        if self.dynamic_range <= 0:
            raise ValueError("dynamic range must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    def weights_for(self, shape) -> np.ndarray:
        """Weights for the scales that fit ``shape``, renormalized when truncated."""
        smallest = min(shape[-2:])
        if smallest < 1:
            raise ValueError("empty image")
        m = min(len(self.weights), int(math.floor(math.log2(smallest))) + 1)
        w = np.asarray(self.weights[:m], dtype=np.float64)
        if m < len(self.weights):
            w = w / w.sum()
        return w


@dataclass(frozen=True)
class LossSpec:
    alpha: float = 0.7
    mssim: MssimParams = MssimParams()

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "intensities", x), dtype=np.float64)


def _pair(x, y):
    x, y = _values(x), _values(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def pool2(a: np.ndarray) -> np.ndarray:
    """2x2 mean pooling over the last two axes; odd trailing row/column dropped."""
    h, w = a.shape[-2] // 2, a.shape[-1] // 2
    a = a[..., : 2 * h, : 2 * w]
    return a.reshape(*a.shape[:-2], h, 2, w, 2).mean(axis=(-3, -1))


def pool2_adjoint(g: np.ndarray, shape) -> np.ndarray:
    """Transpose of :func:`pool2` back onto an array of ``shape``."""
    out = np.zeros(shape, dtype=g.dtype)
    h, w = g.shape[-2], g.shape[-1]
    out[..., : 2 * h, : 2 * w] = np.repeat(np.repeat(g, 2, axis=-2), 2, axis=-1) * 0.25
    return out


def mae(x, y) -> np.ndarray | float:
    x, y = _pair(x, y)
    val = np.abs(x - y).mean(axis=(-2, -1))
    return float(val) if np.ndim(val) == 0 else val


def mae_gradient(x, y) -> np.ndarray:
    x, y = _pair(x, y)
    return np.sign(x - y) / (x.shape[-1] * x.shape[-2])


def _mssim_core(x, y, params: MssimParams, want_grad: bool):
    x, y = _pair(x, y)
    weights = params.weights_for(x.shape)
    m = len(weights)
    c1, c2 = params.c1, params.c2
    batch = x.shape[:-2]

    xs, ys = [x], [y]
    for _ in range(m - 1):
        xs.append(pool2(xs[-1]))
        ys.append(pool2(ys[-1]))

    factors = []  # (value, exponent, per-pixel derivative at its scale)
    for j in range(m):
        xj, yj = xs[j], ys[j]
        n = xj.shape[-1] * xj.shape[-2]
        mx = xj.mean(axis=(-2, -1), keepdims=True)
        my = yj.mean(axis=(-2, -1), keepdims=True)
        dx, dy = xj - mx, yj - my
        vx = (dx * dx).mean(axis=(-2, -1), keepdims=True)
        vy = (dy * dy).mean(axis=(-2, -1), keepdims=True)
        cov = (dx * dy).mean(axis=(-2, -1), keepdims=True)
        num = 2 * cov + c2
        den = vx + vy + c2
        cs = num / den
        dcs = None
        if want_grad:
            dcs = (2 * dy * den - num * 2 * dx) / (n * den * den)
        factors.append((j, cs, weights[j], dcs))
        if j == m - 1:
            lnum = 2 * mx * my + c1
            lden = mx * mx + my * my + c1
            lum = lnum / lden
            dl = None
            if want_grad:
                dl = np.broadcast_to((2 * my * lden - lnum * 2 * mx) / (lden * lden) / n, xj.shape)
            factors.append((j, lum, weights[j], dl))

    value = np.ones(batch + (1, 1))
    for idx, (j, f, w, _) in enumerate(factors):
        base = np.abs(f) if idx == len(factors) - 1 else np.maximum(f, 0.0)
        value = value * base**w
    result = value.reshape(batch)
    if not want_grad:
        return result, None

    # d value / d f = value * w / f for each positive factor; zero factors kill the gradient.
    grads = [np.zeros(batch + xs[j].shape[-2:]) for j in range(m)]
    alive = value > 0
    for idx, (j, f, w, df) in enumerate(factors):
        is_lum = idx == len(factors) - 1
        safe = np.where(alive, f, 1.0)
        coeff = np.where(alive, value * w / safe, 0.0)
        if not is_lum:
            coeff = np.where(f > 0, coeff, 0.0)
        grads[j] = grads[j] + coeff * df
    g = grads[m - 1]
    for j in range(m - 1, 0, -1):
        g = pool2_adjoint(g, xs[j - 1].shape) + grads[j - 1]
    return result, g


def mssim(x, y, params: MssimParams = MssimParams()):
    val, _ = _mssim_core(x, y, params, want_grad=False)
    return float(val) if np.ndim(val) == 0 else val


def mssim_gradient(x, y, params: MssimParams = MssimParams()) -> np.ndarray:
    """d MSSIM / d x, same shape as ``x``."""
    return _mssim_core(x, y, params, want_grad=True)[1]


def mssim_and_gradient(x, y, params: MssimParams = MssimParams()):
    val, g = _mssim_core(x, y, params, want_grad=True)
    return (float(val) if np.ndim(val) == 0 else val), g


def combined_loss(x, y, spec: LossSpec = LossSpec()):
    """``(1 - alpha) * MAE + alpha * (1 - MSSIM)`` with ``x`` the denoised frame."""
    val = (1 - spec.alpha) * np.asarray(mae(x, y)) + spec.alpha * (1 - np.asarray(mssim(x, y, spec.mssim)))
    return float(val) if np.ndim(val) == 0 else val


def combined_loss_and_gradient(x, y, spec: LossSpec = LossSpec()):
    ms, g_ms = mssim_and_gradient(x, y, spec.mssim)
    loss = (1 - spec.alpha) * np.asarray(mae(x, y)) + spec.alpha * (1 - np.asarray(ms))
    grad = (1 - spec.alpha) * mae_gradient(x, y) - spec.alpha * g_ms
    return (float(loss) if np.ndim(loss) == 0 else loss), grad


def quality(x, y, spec: LossSpec = LossSpec()):
    """The "MAE+MSSIM" score: ``1 - combined_loss`` (1 is perfect)."""
    val = 1 - np.asarray(combined_loss(x, y, spec))
    return float(val) if np.ndim(val) == 0 else val


def psnr(x, y, peak: float = 1.0):
    """``10 log10(peak^2 / MSE)`` in dB, capped at 200 dB for identical inputs."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    x, y = _pair(x, y)
    mse = ((x - y) ** 2).mean(axis=(-2, -1))
    with np.errstate(divide="ignore"):
        val = np.where(mse > 0, 10 * np.log10(peak**2 / np.where(mse > 0, mse, 1.0)), PSNR_CAP_DB)
    val = np.minimum(val, PSNR_CAP_DB)
    return float(val) if np.ndim(val) == 0 else val


def delta_heatmap(hc, do) -> np.ndarray:
    """Per-pixel ``(hc - do) / (hc + do)``; zero where the denominator vanishes."""
    hc, do = _pair(hc, do)
    den = hc + do
    safe = np.where(den == 0, 1.0, den)
    return np.where(den == 0, 0.0, (hc - do) / safe)


def delta_display(delta: np.ndarray, floor: float = -5.0) -> np.ndarray:
    """``log10 |delta|`` clipped to ``[floor, 0]`` for display."""
    mag = np.abs(np.asarray(delta, dtype=np.float64))
    with np.errstate(divide="ignore"):
        out = np.where(mag > 0, np.log10(np.where(mag > 0, mag, 1.0)), floor)
    return np.clip(out, floor, 0.0)
