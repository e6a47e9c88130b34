"""Residual-CNN denoising workbench for X-ray diffraction detector frames."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
