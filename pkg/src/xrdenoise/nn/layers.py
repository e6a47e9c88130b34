"""Forward/backward primitives on NCHW arrays.

Convolutions are stride-1 "same" cross-correlations with zero padding,
lowered to a matrix product over im2col patches.
"""

import numpy as np

from .. import kernels


class ShapeError(ValueError):
    pass


def conv2d_forward(x, weight, bias):
    """Return ``(out, cache)`` for ``x`` (N, C, H, W) and ``weight`` (F, C, kh, kw)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d expects 4D input and weights")
    n, c, h, w = x.shape
    f, cw, kh, kw = weight.shape
    if c != cw:
        raise ShapeError(f"input has {c} channels, weights expect {cw}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError("kernel size must be odd")
    if bias.shape != (f,):
        raise ShapeError(f"bias shape {bias.shape} != ({f},)")
    ph, pw = kh // 2, kw // 2
    xpad = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = kernels.im2col(xpad, kh, kw)
    out = weight.reshape(f, -1) @ cols + bias[:, None]
    out = out.reshape(f, n, h, w).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(out), (cols, x.shape)


def conv2d_backward(grad_out, cache, weight):
    """Return ``(grad_input, grad_weight, grad_bias)``."""
    cols, (n, c, h, w) = cache
    f, _, kh, kw = weight.shape
    if grad_out.shape != (n, f, h, w):
        raise ShapeError(f"grad_out shape {grad_out.shape} != {(n, f, h, w)}")
    g = grad_out.transpose(1, 0, 2, 3).reshape(f, -1)
    grad_w = (g @ cols.T).reshape(weight.shape)
    grad_b = g.sum(axis=1)
    gcols = weight.reshape(f, -1).T @ g
    gpad = kernels.col2im(gcols, n, c, h, w, kh, kw)
    ph, pw = kh // 2, kw // 2
    grad_x = gpad[:, :, ph : ph + h, pw : pw + w]
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(grad_out, mask):
    return grad_out * mask


def pool_forward(x):
    """2x2 mean pooling (even H, W required)."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"pooling needs even spatial dims, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def pool_backward(grad_out):
    g = np.repeat(np.repeat(grad_out, 2, axis=2), 2, axis=3)
    return g * np.asarray(0.25, dtype=grad_out.dtype)


def upsample_forward(x):
    """Nearest-neighbour 2x upsampling."""
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def upsample_backward(grad_out):
    n, c, h, w = grad_out.shape
    return grad_out.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))
