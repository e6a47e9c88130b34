"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise (or when
``XRDENOISE_PURE_PYTHON=1`` is set) the NumPy versions are used. ``BACKEND``
names the active one.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("XRDENOISE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"
    else:
        BACKEND = "cython"


def backend_module(name=None):
    """Return the kernel module for ``name`` ("cython", "python" or None=active)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def im2col(xpad, kh, kw):
    return _impl.im2col(np.ascontiguousarray(xpad), kh, kw)


def col2im(cols, n_img, n_ch, h, w, kh, kw):
    return _impl.col2im(np.ascontiguousarray(cols), n_img, n_ch, h, w, kh, kw)


def poisson_sample(mean, u, z):
    """Poisson draws for each entry of ``mean`` given pre-drawn uniforms and normals.

    Means below 30 use sequential-search inversion on ``u``; larger means use
    ``floor(mean + sqrt(mean) * z + 0.5)`` clipped at zero.
    """
    shape = np.shape(mean)
    flat = [np.ascontiguousarray(np.ravel(a), dtype=np.float64) for a in (mean, u, z)]
    return np.asarray(_impl.poisson_sample(*flat)).reshape(shape)


def correlate2d_reflect(image, kernel):
    """Same-size 2D cross-correlation with numpy ``reflect`` border padding."""
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    ph, pw = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = np.pad(np.asarray(image, dtype=np.float64), ((ph, ph), (pw, pw)), mode="reflect")
    return np.asarray(_impl.correlate2d_padded(np.ascontiguousarray(padded), kernel))
