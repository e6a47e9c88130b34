"""Synthetic diffraction scenes standing in for measured high-count frames.

A scene lives on a detector whose rows follow the l axis and whose columns
follow h; consecutive frames of a stack step along k. Charge-density-wave rods
are separable Gaussians in (h, k, l); Debye-Scherrer rings, Bragg spots and
spurions are placed in pixel space.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .frames import AxisSpec, Frame, ReciprocalAxes

log = logging.getLogger(__name__)

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
HWHM_PER_SIGMA = math.sqrt(2.0 * math.log(2.0))

# In-plane and out-of-plane lattice constants (Angstrom) of the tetragonal cell.
LATTICE_A = 5.32 / math.sqrt(2.0)
LATTICE_C = 13.2
TARGET_XI_A = 50.0
TARGET_XI_C = 6.0


def sigma_for_correlation_length(xi: float, lattice: float) -> float:
    """Gaussian sigma in r.l.u. whose inverse HWHM (in 1/Angstrom) equals ``xi``."""
    hwhm_inv_angstrom = 1.0 / xi
    hwhm_rlu = hwhm_inv_angstrom * lattice / (2.0 * math.pi)
    return hwhm_rlu / HWHM_PER_SIGMA


@dataclass(frozen=True)
class Rod:
    center: tuple[float, float, float]  # (h, k, l) r.l.u.
    amplitude: float
    sigma_h: float
    sigma_k: float
    sigma_l: float


@dataclass(frozen=True)
class BraggPeak:
    center: tuple[float, float]  # pixel (row, col)
    amplitude: float
    width: float  # pixels


@dataclass(frozen=True)
class DebyeRing:
    center: tuple[float, float]  # pixel (row, col)
    radius: float
    amplitude: float
    width: float


@dataclass(frozen=True)
class Spurion:
    pixel: tuple[int, int]
    amplitude: float


@dataclass(frozen=True)
class SceneSpec:
    height: int = 64
    width: int = 64
    rows: AxisSpec = AxisSpec("l", 8.5 - 32 * 0.05, 0.05)
    cols: AxisSpec = AxisSpec("h", 0.23 - 32 * 0.0025, 0.0025)
    stack: AxisSpec = AxisSpec("k", -10 * 0.004, 0.004)
    n_stack: int = 21
    background: float = 20.0
    gradient_rows: float = 4.0  # change across the full frame height
    gradient_cols: float = 3.0
    rods: tuple[Rod, ...] = ()
    bragg_peaks: tuple[BraggPeak, ...] = ()
    rings: tuple[DebyeRing, ...] = ()
    spurions: tuple[Spurion, ...] = ()
    dead_fraction: float = 0.001
    jitter_amplitude: float = 0.10
    jitter_shift: float = 2.0  # pixels

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.n_stack < 1:
            raise ValueError("scene dimensions must be positive")
        if not 0 <= self.dead_fraction < 1:
            raise ValueError("dead_fraction must lie in [0, 1)")
        for rod in self.rods:
            if rod.amplitude < 0 or min(rod.sigma_h, rod.sigma_k, rod.sigma_l) <= 0:
                raise ValueError(f"bad rod {rod}")
        for feat in (*self.bragg_peaks, *self.rings):
            if feat.amplitude < 0 or feat.width <= 0:
                raise ValueError(f"bad feature {feat}")
        if any(s.amplitude < 0 for s in self.spurions):
            raise ValueError("spurion amplitudes must be non-negative")

    def k_coord(self, k_index: int) -> float:
        return self.stack.origin + k_index * self.stack.step

    def axes_for(self, k_index: int) -> ReciprocalAxes:
        return ReciprocalAxes(self.rows, self.cols, AxisSpec(self.stack.label, self.k_coord(k_index), self.stack.step))


def default_rod() -> Rod:
    return Rod(
        center=(0.23, 0.0, 8.5),
        amplitude=40.0,
        sigma_h=sigma_for_correlation_length(TARGET_XI_A, LATTICE_A),
        sigma_k=0.008,
        sigma_l=sigma_for_correlation_length(TARGET_XI_C, LATTICE_C),
    )


def default_scene() -> SceneSpec:
    """Rod at Q = (0.23, 0, 8.5) sized for xi_a = 50 A and xi_c = 6 A."""
    return SceneSpec(
        rods=(default_rod(),),
        rings=(DebyeRing(center=(-40.0, -40.0), radius=60.0, amplitude=120.0, width=3.0),),
        spurions=(Spurion((5, 55), 250.0), Spurion((55, 8), 200.0), Spurion((50, 58), 220.0)),
    )


@dataclass
class GroundTruth:
    """Clean high-count frames plus what was used to render them."""

    frames: list[Frame]
    scenes: list[SceneSpec]
    k_indices: list[int]
    lc_scale: float
    detector_seed: int = 0
    peaks: list[dict] = field(default_factory=list)

    def clean_lc(self) -> list[Frame]:
        """Noise-free low-count expectation: HC frames scaled by the exposure ratio."""
        return [f.with_intensities(np.asarray(f.intensities, dtype=np.float64) * self.lc_scale) for f in self.frames]

    def write_peaks_csv(self, path) -> None:
        cols = ["pair_index", "k_index", "rod", "h0", "k0", "l0", "amplitude", "amplitude_at_k", "sigma_h", "sigma_k", "sigma_l"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            for row in self.peaks:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def dead_pixel_mask(shape, fraction: float, seed: int) -> np.ndarray:
    n = shape[0] * shape[1]
    n_dead = int(round(fraction * n))
    mask = np.zeros(n, dtype=bool)
    if n_dead:
        mask[np.random.default_rng(seed).choice(n, size=n_dead, replace=False)] = True
    return mask.reshape(shape)


def _gauss(x, sigma):
    return np.exp(-0.5 * (x / sigma) ** 2)


def render_clean(scene: SceneSpec, k_index: int) -> np.ndarray:
    """Noise-free intensities (float64, counts) of frame ``k_index`` without dead pixels."""
    if not 0 <= k_index < scene.n_stack:
        raise ValueError(f"k_index {k_index} outside stack of {scene.n_stack}")
    h, w = scene.height, scene.width
    rr = np.arange(h, dtype=np.float64)[:, None]
    cc = np.arange(w, dtype=np.float64)[None, :]
    ry = rr / max(h - 1, 1) - 0.5
    cx = cc / max(w - 1, 1) - 0.5
    img = scene.background + scene.gradient_rows * ry + scene.gradient_cols * cx
    img = np.broadcast_to(img, (h, w)).copy()

    l_coord = scene.rows.coords(h)[:, None]
    h_coord = scene.cols.coords(w)[None, :]
    k = scene.k_coord(k_index)
    for rod in scene.rods:
        h0, k0, l0 = rod.center
        amp_k = rod.amplitude * _gauss(k - k0, rod.sigma_k)
        img += amp_k * _gauss(h_coord - h0, rod.sigma_h) * _gauss(l_coord - l0, rod.sigma_l)
    for peak in scene.bragg_peaks:
        r2 = (rr - peak.center[0]) ** 2 + (cc - peak.center[1]) ** 2
        img += peak.amplitude * np.exp(-0.5 * r2 / peak.width**2)
    for ring in scene.rings:
        dist = np.sqrt((rr - ring.center[0]) ** 2 + (cc - ring.center[1]) ** 2)
        img += ring.amplitude * _gauss(dist - ring.radius, ring.width)
    for sp in scene.spurions:
        r, c = sp.pixel
        if 0 <= r < h and 0 <= c < w:
            img[r, c] += sp.amplitude
    return np.maximum(img, 0.0)


def _check_visibility(scene: SceneSpec) -> None:
    l_lo, l_hi = sorted((scene.rows.origin, scene.rows.origin + (scene.height - 1) * scene.rows.step))
    h_lo, h_hi = sorted((scene.cols.origin, scene.cols.origin + (scene.width - 1) * scene.cols.step))
    for rod in scene.rods:
        h0, _, l0 = rod.center
        if not (h_lo - 3 * rod.sigma_h <= h0 <= h_hi + 3 * rod.sigma_h and l_lo - 3 * rod.sigma_l <= l0 <= l_hi + 3 * rod.sigma_l):
            log.warning("rod at %s lies outside the frame", rod.center)
    for sp in scene.spurions:
        if not (0 <= sp.pixel[0] < scene.height and 0 <= sp.pixel[1] < scene.width):
            log.warning("spurion at %s lies outside the frame", sp.pixel)


def render_frame(scene: SceneSpec, k_index: int, seed: int = 0) -> Frame:
    """Render one clean frame of the stack; ``seed`` places the dead pixels."""
    _check_visibility(scene)
    img = render_clean(scene, k_index)
    mask = dead_pixel_mask(img.shape, scene.dead_fraction, seed)
    return Frame(img.astype(np.float32), mask, scene.axes_for(k_index))


def render_stack(scene: SceneSpec, seed: int = 0) -> list[Frame]:
    return [render_frame(scene, i, seed) for i in range(scene.n_stack)]


def jitter_scene(scene: SceneSpec, rng: np.random.Generator) -> SceneSpec:
    """Scale feature amplitudes by U(1 - a, 1 + a) and shift centres by U(-s, s) pixels."""
    a, s = scene.jitter_amplitude, scene.jitter_shift

    def amp():
        return rng.uniform(1 - a, 1 + a) if a > 0 else 1.0

    def shift():
        return rng.uniform(-s, s) if s > 0 else 0.0

    rods = []
    for rod in scene.rods:
        h0, k0, l0 = rod.center
        rods.append(
            replace(
                rod,
                center=(h0 + shift() * scene.cols.step, k0, l0 + shift() * scene.rows.step),
                amplitude=rod.amplitude * amp(),
            )
        )
    rings = [
        replace(r, center=(r.center[0] + shift(), r.center[1] + shift()), amplitude=r.amplitude * amp())
        for r in scene.rings
    ]
    peaks = [
        replace(p, center=(p.center[0] + shift(), p.center[1] + shift()), amplitude=p.amplitude * amp())
        for p in scene.bragg_peaks
    ]
    spurions = [replace(sp, amplitude=sp.amplitude * amp()) for sp in scene.spurions]
    return replace(scene, rods=tuple(rods), rings=tuple(rings), bragg_peaks=tuple(peaks), spurions=tuple(spurions))


def generate_dataset(
    scene: SceneSpec, n_pairs: int, hc_exposure_scale: float = 2.0 / 21.0, seed: int = 0
) -> tuple[GroundTruth, list[Frame]]:
    """Render ``n_pairs`` clean high-count frames from jittered copies of ``scene``.

    Each frame uses a random stack index. ``hc_exposure_scale`` is the LC/HC
    exposure ratio kept in the ground truth for the noise stage. All frames
    share one dead-pixel mask (a property of the detector).
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    detector_seed = int(rng.integers(2**63))
    frames, scenes, k_indices, peaks = [], [], [], []
    for i in range(n_pairs):
        k_index = int(rng.integers(scene.n_stack))
        sc = jitter_scene(scene, rng)
        frames.append(render_frame(sc, k_index, detector_seed))
        scenes.append(sc)
        k_indices.append(k_index)
        for j, rod in enumerate(sc.rods):
            peaks.append(
                dict(
                    pair_index=i,
                    k_index=k_index,
                    rod=j,
                    h0=rod.center[0],
                    k0=rod.center[1],
                    l0=rod.center[2],
                    amplitude=rod.amplitude,
                    amplitude_at_k=rod.amplitude * float(_gauss(sc.k_coord(k_index) - rod.center[1], rod.sigma_k)),
                    sigma_h=rod.sigma_h,
                    sigma_k=rod.sigma_k,
                    sigma_l=rod.sigma_l,
                )
            )
    truth = GroundTruth(frames, scenes, k_indices, hc_exposure_scale, detector_seed, peaks)
    return truth, frames
