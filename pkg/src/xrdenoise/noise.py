"""Noise calibration and artificial low-count frame generation.

Three families: Poisson counting noise at a calibrated exposure ratio, white
Gaussian noise at a calibrated width, and either of them followed by a
random-width 5x5 Gaussian blur ("experimental-like").
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .frames import Frame, FramePair

FAMILIES = ("poisson", "gaussian")
LABELS = {
    ("poisson", False): "pois",
    ("gaussian", False): "gauss",
    ("poisson", True): "pois+g",
    ("gaussian", True): "gauss+g",
}


class CalibrationError(ValueError):
    pass


def derive_seed(seed: int, *index: int) -> int:
    """Mix a base seed with indices into an independent 63-bit seed."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(i) for i in index))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def parse_label(label: str) -> tuple[str, bool]:
    """``"pois+g"`` -> ``("poisson", True)``; ``"exp"`` is an alias of ``pois+g``."""
    if label == "exp":
        label = "pois+g"
    for key, value in LABELS.items():
        if value == label:
            return key
    raise ValueError(f"unknown noise label {label!r}; expected one of {sorted(LABELS.values())} or 'exp'")


@dataclass(frozen=True)
class BlurSpec:
    radius: int = 2
    std_range: tuple[float, float] = (0.3, 0.5)

    def __post_init__(self):
        lo, hi = self.std_range
        if self.radius < 1:
            raise ValueError("blur radius must be >= 1")
        if not (0 < lo <= hi <= self.radius):
            raise ValueError(f"blur std range {self.std_range} must lie within (0, radius]")


@dataclass(frozen=True)
class NoiseSpec:
    family: str = "poisson"
    blur: BlurSpec | None = BlurSpec()
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"noise family must be one of {FAMILIES}")

    @property
    def label(self) -> str:
        return LABELS[(self.family, self.blur is not None)]


@dataclass(frozen=True)
class NoiseCalibration:
    gamma: float
    sigma: float

    def __post_init__(self):
        if not (0 < self.gamma <= 1):
            raise CalibrationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not self.sigma > 0:
            raise CalibrationError(f"sigma must be positive, got {self.sigma}")


def calibrate(pairs: Sequence[FramePair]) -> NoiseCalibration:
    """Median LC/HC integrated-count ratio and median LC standard deviation."""
    if not pairs:
        raise CalibrationError("calibration needs at least one pair")
    ratios, stds = [], []
    for pair in pairs:
        hc_sum = float(np.sum(pair.hc.intensities, dtype=np.float64))
        if hc_sum <= 0:
            raise CalibrationError(f"pair {pair.pair_id}: HC frame integrates to {hc_sum}")
        ratios.append(float(np.sum(pair.lc.intensities, dtype=np.float64)) / hc_sum)
        lc = np.asarray(pair.lc.intensities, dtype=np.float64)[pair.lc.live]
        stds.append(float(np.std(lc)))
    return NoiseCalibration(float(np.median(ratios)), float(np.median(stds)))


def add_poisson(hc: Frame, gamma: float, seed: int) -> Frame:
    """Sample every pixel from Poisson(gamma * hc)."""
    values = np.asarray(hc.intensities, dtype=np.float64)
    if np.any(values < 0):
        raise ValueError("Poisson noise needs non-negative intensities")
    rng = np.random.default_rng(seed)
    u = rng.random(values.shape)
    z = rng.standard_normal(values.shape)
    out = kernels.poisson_sample(gamma * values, u, z)
    return hc.with_intensities(out)


def add_gaussian(hc: Frame, sigma: float, seed: int) -> Frame:
    """Add i.i.d. N(0, sigma^2) to every live pixel. Negative results are kept."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    values = np.asarray(hc.intensities, dtype=np.float64)
    rng = np.random.default_rng(seed)
    noisy = values + sigma * rng.standard_normal(values.shape)
    return hc.with_intensities(np.where(hc.live, noisy, values))


def gaussian_kernel(std: float, radius: int = 2) -> np.ndarray:
    """Normalized ``(2r+1) x (2r+1)`` discrete Gaussian."""
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / std) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


def draw_blur_std(spec: BlurSpec, seed: int) -> float:
    lo, hi = spec.std_range
    return float(np.random.default_rng(seed).uniform(lo, hi))


def blur_frame(frame: Frame, std: float, radius: int = 2) -> Frame:
    out = kernels.correlate2d_reflect(np.asarray(frame.intensities, dtype=np.float64), gaussian_kernel(std, radius))
    return frame.with_intensities(out)


def blur_random_kernel(frame: Frame, spec: NoiseSpec, seed: int) -> Frame:
    """Convolve with a Gaussian kernel whose std is drawn uniformly per frame."""
    if spec.blur is None:
        raise ValueError("noise spec has no blur section")
    return blur_frame(frame, draw_blur_std(spec.blur, seed), spec.blur.radius)


def make_artificial_pair(
    hc: Frame,
    family: str,
    calibration: NoiseCalibration,
    blur: bool | BlurSpec = False,
    seed: int = 0,
    pair_id: str = "pair",
) -> FramePair:
    """Build an (LC, HC) pair from a clean HC frame.

    The noise draw uses ``derive_seed(seed, 0)`` and the blur width
    ``derive_seed(seed, 1)``, so each stage can be replayed on its own.
    """
    blur_spec = blur if isinstance(blur, BlurSpec) else (BlurSpec() if blur else None)
    spec = NoiseSpec(family, blur_spec, seed)
    if family == "poisson":
        lc = add_poisson(hc, calibration.gamma, derive_seed(seed, 0))
    else:
        lc = add_gaussian(hc, calibration.sigma, derive_seed(seed, 0))
    if blur_spec is not None:
        lc = blur_random_kernel(lc, spec, derive_seed(seed, 1))
    return FramePair(lc, hc, f"{pair_id}_{spec.label}")


def experimental_like_lc(hc: Frame, exposure_scale: float, seed: int) -> Frame:
    """Stand-in for a measured short exposure: Poisson at the exposure ratio, then blur."""
    calib = NoiseCalibration(exposure_scale, 1.0)
    return make_artificial_pair(hc, "poisson", calib, True, seed).lc
