"""End-to-end workflows shared by the command line and the acceptance suite.

Seed layout (all through ``derive_seed(seed, stage, ...)``):
10 scene rendering, 11 measured-like LC frames, 12 artificial noise,
13 split shuffle, 20 analysis stack detector, 21 analysis stack LC noise.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis, metrics, synth
from .frames import DatasetManifest, Frame, FramePair, ManifestEntry, normalize_frame, split_dataset, write_frame
from .nn.training import predict_normalized
from .noise import BlurSpec, NoiseCalibration, calibrate, derive_seed, experimental_like_lc, make_artificial_pair, parse_label

log = logging.getLogger(__name__)

# Table 1 row naming; "exp" is the synthetic stand-in for measured short exposures
FAMILY_NAMES = {
    "gauss": "Gaussian",
    "pois": "Poisson",
    "exp": "Exp.",
    "pois+g": "Poisson+blur",
    "gauss+g": "Gaussian+blur",
}


def row_label(train_noise: str, eval_noise: str) -> str:
    return f"{FAMILY_NAMES[train_noise]} → {FAMILY_NAMES[eval_noise]}"


@dataclass
class Dataset:
    truth: synth.GroundTruth
    pairs: list[FramePair]
    manifest: DatasetManifest
    calibration: NoiseCalibration
    noise: str


def measured_like_pairs(hcs: Sequence[Frame], exposure_scale: float, seed: int) -> list[FramePair]:
    """Poisson-plus-blur LC frames at the raw exposure ratio, one per clean HC frame."""
    return [
        FramePair(experimental_like_lc(hc, exposure_scale, derive_seed(seed, 11, i)), hc, f"p{i:04d}")
        for i, hc in enumerate(hcs)
    ]


def noisy_pairs(hcs, noise: str, calibration: NoiseCalibration, blur: BlurSpec, exposure_scale: float, seed: int):
    """LC/HC pairs for one noise label; ``exp`` reproduces the measured-like frames."""
    if noise == "exp":
        return [FramePair(p.lc, p.hc, f"{p.pair_id}_exp") for p in measured_like_pairs(hcs, exposure_scale, seed)]
    family, blurred = parse_label(noise)
    return [
        make_artificial_pair(hc, family, calibration, blur if blurred else False, derive_seed(seed, 12, i), f"p{i:04d}")
        for i, hc in enumerate(hcs)
    ]


def build_dataset(cfg, noise: str | None = None) -> Dataset:
    """Render clean HC frames, calibrate on measured-like LC frames, then inject ``noise``."""
    seed = cfg["seed"]
    noise = noise or cfg["noise"]
    truth, hcs = synth.generate_dataset(cfg.scene_spec(), cfg["n_pairs"], cfg["exposure_scale"], derive_seed(seed, 10))
    calibration = calibrate(measured_like_pairs(hcs, cfg["exposure_scale"], seed))
    pairs = noisy_pairs(hcs, noise, calibration, cfg.blur_spec(), cfg["exposure_scale"], seed)
    manifest = split_dataset([p.pair_id for p in pairs], cfg.fractions(), derive_seed(seed, 13))
    return Dataset(truth, pairs, manifest, calibration, noise)


def renoise(dataset: Dataset, cfg, noise: str) -> Dataset:
    """Same clean frames and split, different LC noise."""
    hcs = dataset.truth.frames
    pairs = noisy_pairs(hcs, noise, dataset.calibration, cfg.blur_spec(), cfg["exposure_scale"], cfg["seed"])
    tags = {e.pair_id.split("_", 1)[0]: e.split for e in dataset.manifest.entries}
    manifest = DatasetManifest([ManifestEntry(p.pair_id, "", "", tags[p.pair_id.split("_", 1)[0]]) for p in pairs])
    return Dataset(dataset.truth, pairs, manifest, dataset.calibration, noise)


def split_pairs(dataset: Dataset, tag: str) -> list[FramePair]:
    wanted = {e.pair_id for e in dataset.manifest.split(tag)}
    return [p for p in dataset.pairs if p.pair_id in wanted]


def write_dataset(dataset: Dataset, out) -> DatasetManifest:
    """DFRM frames under ``frames/``, ``manifest.csv``, ``truth_peaks.csv`` and ``calibration.csv``."""
    out = Path(out)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    paths = {}
    for pair in dataset.pairs:
        lc_rel = f"frames/{pair.pair_id}_lc.dfrm"
        hc_rel = f"frames/{pair.pair_id.split('_', 1)[0]}_hc.dfrm"
        write_frame(pair.lc, out / lc_rel)
        if not (out / hc_rel).exists():
            write_frame(pair.hc, out / hc_rel)
        paths[pair.pair_id] = (lc_rel, hc_rel)
    manifest = dataset.manifest.with_paths(paths)
    manifest.write_csv(out / "manifest.csv")
    dataset.truth.write_peaks_csv(out / "truth_peaks.csv")
    write_calibration(dataset.calibration, dataset.noise, out / "calibration.csv")
    return manifest


def write_calibration(calibration: NoiseCalibration, noise: str, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["gamma", "sigma", "noise"])
        writer.writerow([repr(calibration.gamma), repr(calibration.sigma), noise])


def read_calibration(path) -> tuple[NoiseCalibration, str]:
    with open(path, newline="") as fh:
        row = next(csv.DictReader(fh))
    return NoiseCalibration(float(row["gamma"]), float(row["sigma"])), row["noise"]


# ----------------------------------------------------------------------------
# Evaluation


@dataclass
class Evaluation:
    rows: list[dict]
    denoised: np.ndarray  # (N, H, W) normalized network outputs
    targets: np.ndarray  # (N, H, W) normalized HC frames
    noisy: np.ndarray  # (N, H, W) normalized LC frames
    pair_ids: list[str]


def evaluate_pairs(params, spec, pairs: Sequence[FramePair], loss: metrics.LossSpec = metrics.LossSpec()) -> Evaluation:
    """Per-pair PSNR, MSSIM and quality of the denoised LC against the HC frame.

    Everything is computed on per-frame normalized [0, 1] images (peak 1);
    MAE is the mean absolute error over all pixels.
    """
    if not pairs:
        raise analysis.AnalysisError("no pairs to evaluate")
    lc = np.stack([normalize_frame(p.lc)[0].intensities for p in pairs])
    hc = np.stack([normalize_frame(p.hc)[0].intensities for p in pairs])
    do = predict_normalized(params, spec, lc)
    rows = score_rows([p.pair_id for p in pairs], do, hc, loss)
    return Evaluation(rows, do, hc, lc, [p.pair_id for p in pairs])


def score_rows(pair_ids, outputs, targets, loss: metrics.LossSpec = metrics.LossSpec()) -> list[dict]:
    outputs = np.asarray(outputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    ps = np.atleast_1d(metrics.psnr(outputs, targets))
    ms = np.atleast_1d(metrics.mssim(outputs, targets, loss.mssim))
    qs = np.atleast_1d(metrics.quality(outputs, targets, loss))
    return [dict(pair_id=i, psnr_db=float(p), mssim=float(m), quality=float(q)) for i, p, m, q in zip(pair_ids, ps, ms, qs)]


METRIC_COLUMNS = ["pair_id", "psnr_db", "mssim", "quality"]


def write_metrics(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for r in rows:
            writer.writerow([r["pair_id"], repr(r["psnr_db"]), repr(r["mssim"]), repr(r["quality"])])


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            dict(pair_id=r["pair_id"], psnr_db=float(r["psnr_db"]), mssim=float(r["mssim"]), quality=float(r["quality"]))
            for r in csv.DictReader(fh)
        ]


# ----------------------------------------------------------------------------
# Peak-fit physics on a reciprocal-space stack

SCAN_AXES = ("h", "l", "k")


@dataclass
class PhysicsResult:
    report: analysis.CorrelationReport
    hc_fits: dict
    do_fits: dict
    hc_scans: dict
    do_scans: dict


def analysis_stacks(cfg, seed: int):
    """Clean HC stack of the configured scene and experimental-like LC frames of it."""
    scene = cfg.scene_spec()
    hc = synth.render_stack(scene, derive_seed(seed, 20))
    lc = [experimental_like_lc(f, cfg["exposure_scale"], derive_seed(seed, 21, i)) for i, f in enumerate(hc)]
    return hc, lc


def normalized_stack(frames: Sequence[Frame]) -> list[Frame]:
    return [normalize_frame(f)[0] for f in frames]


def denoise_stack(params, spec, lc: Sequence[Frame]) -> list[Frame]:
    """Network outputs in the normalized domain, dead pixels zeroed."""
    norm = normalized_stack(lc)
    out = predict_normalized(params, spec, np.stack([f.intensities for f in norm]))
    return [f.with_intensities(np.where(f.live, o, 0.0)) for f, o in zip(norm, out)]


def fit_stack(frames: Sequence[Frame], cfg) -> tuple[dict, dict]:
    scans, fits = {}, {}
    for axis in SCAN_AXES:
        scan = analysis.project_scan(frames, cfg.q0(), axis, cfg.windows())
        scan = analysis.subtract_background(scan, cfg["flank_fraction"])
        scans[axis] = scan
        fits[axis] = analysis.fit_gaussian_1d(scan)
    return scans, fits


def physics_comparison(hc_frames, do_frames, cfg) -> PhysicsResult:
    """Fit h, l and k scans through the rod on HC and DO stacks and form DO/HC ratios.

    Both stacks are compared in the normalized [0, 1] domain the network works in.
    """
    hc_scans, hc_fits = fit_stack(normalized_stack(hc_frames), cfg)
    do_scans, do_fits = fit_stack(do_frames, cfg)
    report = analysis.ratio_report(hc_fits, do_fits, cfg["lattice_a"], cfg["lattice_c"])
    return PhysicsResult(report, hc_fits, do_fits, hc_scans, do_scans)


def hc_correlation_lengths(cfg, seed: int = 0) -> dict:
    """xi_a, xi_c and w_b fitted on the clean HC stack in raw counts."""
    hc, _ = analysis_stacks(cfg, seed)
    _, fits = fit_stack(hc, cfg)
    return dict(
        xi_a=analysis.correlation_length(fits["h"], cfg["lattice_a"]),
        xi_c=analysis.correlation_length(fits["l"], cfg["lattice_c"]),
        w_b=analysis.integrated_intensity(fits["k"]),
    )
