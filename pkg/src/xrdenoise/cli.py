"""Command line: ``xrdenoise [--config PATH] [--seed N] [--out DIR] <command> ...``

Commands: synth, noise, train, denoise, eval, fit, report. Every command
writes into a fresh run directory together with ``config.txt``, the fully
resolved configuration. Exit codes: 0 success, 2 configuration error,
3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, metrics, pipeline
from .config import ConfigError, RunConfig
from .frames import DatasetManifest, FrameError, ManifestEntry, normalize_frame, read_frame, write_frame
from .nn import (
    CheckpointError,
    DivergenceError,
    TrainingDiverged,
    checkpoint_meta,
    denoise,
    denoise_normalized,
    load_checkpoint,
    read_history,
    save_checkpoint,
    train,
    write_history,
)
from .noise import CalibrationError

log = logging.getLogger("xrdenoise")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class DataError(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# helpers


def _run_dir(args, command: str) -> Path:
    """The fresh output directory of this invocation."""
    if args.out is not None:
        out = Path(args.out)
        if out.exists() and any(out.iterdir()):
            raise ConfigError(f"output directory {out} exists and is not empty")
    else:
        root = Path("runs")
        n = 0
        while (root / f"{command}-{n:03d}").exists():
            n += 1
        out = root / f"{command}-{n:03d}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _overrides(args) -> dict:
    over = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        over[k.strip()] = v.strip()
    for key in ("seed", "noise", "arch", "n_pairs"):
        value = getattr(args, key, None)
        if value is not None:
            over[key] = str(value)
    return over


def _config(args) -> RunConfig:
    return RunConfig.load(args.config, _overrides(args))


def _data_noise(data_dir: Path) -> str:
    path = data_dir / "calibration.csv"
    if not path.exists():
        return "unknown"
    return pipeline.read_calibration(path)[1]


def _load_split(data_dir: Path, split: str):
    manifest_path = data_dir / "manifest.csv"
    if not manifest_path.exists():
        raise DataError(f"{data_dir} has no manifest.csv")
    manifest = DatasetManifest.read_csv(manifest_path)
    pairs = manifest.load_pairs(split, data_dir)
    if not pairs:
        raise DataError(f"split {split!r} of {data_dir} is empty")
    return pairs


# ----------------------------------------------------------------------------
# commands


def cmd_synth(args, cfg: RunConfig, out: Path) -> None:
    dataset = pipeline.build_dataset(cfg)
    manifest = pipeline.write_dataset(dataset, out)
    log.info("wrote %d pairs %s (gamma %.4f, sigma %.4f)", len(manifest.entries), manifest.counts(),
             dataset.calibration.gamma, dataset.calibration.sigma)


def cmd_noise(args, cfg: RunConfig, out: Path) -> None:
    """Re-noise an existing dataset: same HC frames, split and calibration."""
    src = Path(args.data)
    calibration, _ = pipeline.read_calibration(src / "calibration.csv")
    manifest = DatasetManifest.read_csv(src / "manifest.csv")
    source = manifest.load_pairs(None, src)
    fresh = pipeline.noisy_pairs(
        [p.hc for p in source], cfg["noise"], calibration, cfg.blur_spec(), cfg["exposure_scale"], cfg["seed"]
    )
    (out / "frames").mkdir()
    entries = []
    for entry, pair in zip(manifest.entries, fresh):
        # keep the source pair numbering, swap the noise suffix
        base = entry.pair_id.split("_", 1)[0]
        pair_id = f"{base}_{pair.pair_id.split('_', 1)[1]}"
        lc_rel, hc_rel = f"frames/{pair_id}_lc.dfrm", f"frames/{base}_hc.dfrm"
        write_frame(pair.lc, out / lc_rel)
        write_frame(pair.hc, out / hc_rel)
        entries.append(ManifestEntry(pair_id, lc_rel, hc_rel, entry.split))
    DatasetManifest(entries).write_csv(out / "manifest.csv")
    pipeline.write_calibration(calibration, cfg["noise"], out / "calibration.csv")
    log.info("re-noised %d pairs with %s", len(entries), cfg["noise"])


def _train_one(cfg: RunConfig, data: Path, out: Path, noise: str) -> None:
    spec, tc = cfg.network_spec(), cfg.train_config()
    train_pairs, val_pairs = _load_split(data, "train"), _load_split(data, "val")
    meta = dict(noise=noise, seed=cfg["seed"])
    history_path = out / "history.csv"
    try:
        result = train(spec, tc, train_pairs, val_pairs)
    except TrainingDiverged as exc:
        write_history(exc.history, history_path)
        save_checkpoint(out / "checkpoint.dnet", spec, exc.best_params, meta)
        raise
    write_history(result.history, history_path)
    save_checkpoint(out / "checkpoint.dnet", spec, result.params, meta)
    save_checkpoint(out / "final.dnet", spec, result.final_params, meta)
    cfg.write(out / "config.txt")
    log.info("best epoch %d, val loss %.6f", result.best_epoch, result.history[result.best_epoch].val_loss)


def cmd_train(args, cfg: RunConfig, out: Path) -> None:
    data = Path(args.data)
    noise = _data_noise(data)
    if not args.ensemble:
        _train_one(cfg, data, out, noise)
        return
    for seed in cfg.ensemble_seeds():
        sub = out / f"seed_{seed}"
        sub.mkdir()
        _train_one(cfg.updated(seed=seed), data, sub, noise)


def cmd_denoise(args, cfg: RunConfig, out: Path) -> None:
    spec, params = load_checkpoint(args.checkpoint)
    for path in args.frames:
        lc = read_frame(path)
        result = denoise_normalized(params, spec, lc)[0] if args.normalized else denoise(params, spec, lc)
        write_frame(result, out / f"{Path(path).stem}_do.dfrm")


def _summary_row(label, train_noise, eval_noise, split, summary, checkpoint) -> dict:
    row = dict(row=label, train_noise=train_noise, eval_noise=eval_noise, split=split)
    row.update(summary.as_dict())
    row.update(mae_normalization=metrics.MAE_NORMALIZATION, psnr_peak=1.0, domain="minmax-normalized", checkpoint=checkpoint)
    return row


def _write_rows(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _write_hist(summary, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin_left", "bin_right", "count", "fit_amplitude", "fit_mu", "fit_sigma"])
        for lo, hi, c in zip(summary.hist_edges[:-1], summary.hist_edges[1:], summary.hist_counts):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(c), repr(summary.fit_amplitude), repr(summary.psnr_mu), repr(summary.psnr_sigma)])


def cmd_eval(args, cfg: RunConfig, out: Path) -> None:
    checkpoints = args.checkpoint or [None] * len(args.data)
    if len(checkpoints) != len(args.data):
        raise ConfigError("give one --data per --checkpoint")
    summaries = []
    for i, (ck, data) in enumerate(zip(checkpoints, args.data)):
        data = Path(data)
        pairs = _load_split(data, args.split)
        eval_noise = _data_noise(data)
        if ck is None:
            # identity model: score the chosen input frame directly
            frames = [(p.hc if args.input == "hc" else p.lc) for p in pairs]
            outputs = np.stack([normalize_frame(f)[0].intensities for f in frames])
            targets = np.stack([normalize_frame(p.hc)[0].intensities for p in pairs])
            rows = pipeline.score_rows([p.pair_id for p in pairs], outputs, targets)
            train_noise = "none"
        else:
            spec, params = load_checkpoint(ck)
            train_noise = checkpoint_meta(ck).get("noise", "unknown")
            ev = pipeline.evaluate_pairs(params, spec, pairs)
            rows, outputs, targets = ev.rows, ev.denoised, ev.targets
        tag = "" if len(args.data) == 1 else f"_{i}"
        pipeline.write_metrics(rows, out / f"metrics{tag}.csv")
        heat = out / f"heatmaps{tag}"
        heat.mkdir()
        for pair, o, t in zip(pairs, outputs, targets):
            delta = metrics.delta_heatmap(t, o)
            write_frame(pair.hc.with_intensities(delta), heat / f"{pair.pair_id}_delta.dfrm")
            write_frame(pair.hc.with_intensities(metrics.delta_display(delta)), heat / f"{pair.pair_id}_delta_log.dfrm")
        summary = analysis.aggregate_scores(rows)
        _write_hist(summary, out / f"psnr_hist{tag}.csv")
        if train_noise in pipeline.FAMILY_NAMES and eval_noise in pipeline.FAMILY_NAMES:
            label = pipeline.row_label(train_noise, eval_noise)
        else:
            label = f"{train_noise} → {eval_noise}"
        summaries.append(_summary_row(label, train_noise, eval_noise, args.split, summary, ck or ""))
        log.info("%s: PSNR %.2f dB, MSSIM %.4f, quality %.4f", label, summary.psnr_mu, summary.mssim_median, summary.quality_median)
    _write_rows(summaries, out / "summary.csv")


def _pdf_rows(frames, label):
    rows = []
    for i, frame in enumerate(frames):
        for model in analysis.PDF_MODELS:
            fit = analysis.fit_pdf(frame, model)
            params = ";".join(f"{k}={float(v)!r}" for k, v in fit.params.items())
            rows.append(dict(source=label, frame=i, model=model, reduced_chi2=fit.reduced_chi2, converged=fit.converged, params=params))
    return rows


def cmd_fit(args, cfg: RunConfig, out: Path) -> None:
    if args.hc:
        hc = [read_frame(p) for p in args.hc]
        lc = [read_frame(p) for p in args.lc] if args.lc else []
    else:
        hc, lc = pipeline.analysis_stacks(cfg, cfg["seed"])
        for i, (h, l) in enumerate(zip(hc, lc)):
            write_frame(h, out / f"stack_hc_{i:02d}.dfrm")
            write_frame(l, out / f"stack_lc_{i:02d}.dfrm")
    do_sets = []
    if args.do:
        do_sets.append(("do", [read_frame(p) for p in args.do]))
    for i, ck in enumerate(args.checkpoint or []):
        if not lc:
            raise DataError("denoising for fits needs LC frames (--lc)")
        spec, params = load_checkpoint(ck)
        do_sets.append((f"do{i}", pipeline.denoise_stack(params, spec, lc)))

    hc_scans, hc_fits = pipeline.fit_stack(pipeline.normalized_stack(hc), cfg)
    for axis, scan in hc_scans.items():
        scan.write_csv(out / f"scan_hc_{axis}.csv")
    if not do_sets:
        analysis.ratio_report(hc_fits, {}, cfg["lattice_a"], cfg["lattice_c"]).write_csv(out / "correlation.csv")
    ratios = {}
    for name, frames in do_sets:
        res = pipeline.physics_comparison(hc, frames, cfg)
        for axis, scan in res.do_scans.items():
            scan.write_csv(out / f"scan_{name}_{axis}.csv")
        suffix = "" if len(do_sets) == 1 else f"_{name}"
        res.report.write_csv(out / f"correlation{suffix}.csv")
        for q, r in res.report.ratios.items():
            if r is not None:
                ratios.setdefault(q, []).append(r[0])
    if len(do_sets) > 1:
        rows = [
            dict(quantity=q, mean_ratio=float(np.mean(v)), std_ratio=float(np.std(v, ddof=1)) if len(v) > 1 else float("nan"), n=len(v))
            for q, v in ratios.items()
        ]
        _write_rows(rows, out / "ensemble.csv")
    if lc and not args.no_pdf:
        frames = lc if args.pdf_limit is None else lc[: args.pdf_limit]
        rows = _pdf_rows(frames, "lc")
        _write_rows(rows, out / "pdf.csv")


def _plot_setup():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def cmd_report(args, cfg: RunConfig, out: Path) -> None:
    plt = None
    made = 0
    for run in args.run:
        run = Path(run)
        histories = sorted(run.rglob("history.csv"))
        for path in histories:
            rows = read_history(path)
            if not rows:
                raise DataError(f"{path}: nothing to plot")
            plt = plt or _plot_setup()
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.plot([r.epoch for r in rows], [r.train_loss for r in rows], label="train")
            ax.plot([r.epoch for r in rows], [r.val_loss for r in rows], label="validation")
            ax.set_xlabel("epoch")
            ax.set_ylabel("loss (MAE+MSSIM)")
            ax.legend()
            name = "_".join(path.relative_to(run).parent.parts) or run.name
            fig.savefig(out / f"loss_{name}.svg")
            plt.close(fig)
            made += 1
        for path in sorted(run.glob("metrics*.csv")):
            rows = pipeline.read_metrics(path)
            if not rows:
                raise DataError(f"{path}: nothing to plot")
            summary = analysis.aggregate_scores(rows)
            stem = path.stem.replace("metrics", "psnr_hist")
            _write_hist(summary, out / f"{stem}.csv")
            plt = plt or _plot_setup()
            fig, ax = plt.subplots(figsize=(5, 3.5))
            edges, counts = summary.hist_edges, summary.hist_counts
            ax.stairs(counts, edges, fill=True, alpha=0.5, label="pairs")
            if summary.psnr_fit_ok:
                q = np.linspace(edges[0], edges[-1], 200)
                width = np.diff(edges).mean()
                dens = summary.fit_amplitude * np.exp(-0.5 * ((q - summary.psnr_mu) / summary.psnr_sigma) ** 2)
                ax.plot(q, dens * counts.sum() * width, label=f"Gaussian fit, mu={summary.psnr_mu:.2f} dB")
            ax.set_xlabel("PSNR [dB]")
            ax.set_ylabel("count")
            ax.legend()
            fig.savefig(out / f"{stem}.svg")
            plt.close(fig)
            made += 1
        for path in sorted(run.glob("scan_*.csv")):
            with open(path, newline="") as fh:
                data = [(float(r["coordinate"]), float(r["intensity"])) for r in csv.DictReader(fh)]
            if not data:
                continue
            plt = plt or _plot_setup()
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.plot(*zip(*data), "o-", ms=3)
            ax.set_xlabel(path.stem.rsplit("_", 1)[-1] + " [r.l.u.]")
            ax.set_ylabel("intensity (background subtracted)")
            fig.savefig(out / f"{path.stem}.svg")
            plt.close(fig)
            made += 1
    if made == 0:
        raise DataError("nothing to plot")
    log.info("wrote %d plots", made)


COMMANDS = {
    "synth": cmd_synth,
    "noise": cmd_noise,
    "train": cmd_train,
    "denoise": cmd_denoise,
    "eval": cmd_eval,
    "fit": cmd_fit,
    "report": cmd_report,
}


def _add_globals(p, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=default, help="key = value configuration file")
    p.add_argument("--seed", type=int, metavar="N", default=default, help="override the configured seed")
    p.add_argument("--out", metavar="DIR", default=default, help="fresh output directory")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", default=default, help="override one config key")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xrdenoise", description="Denoise low-count X-ray diffraction frames.")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help):
        p = sub.add_parser(name, help=help)
        _add_globals(p, suppress=True)
        return p

    p = add("synth", "render a synthetic LC/HC dataset")
    p.add_argument("--noise", help="noise label: pois, gauss, pois+g, gauss+g or exp")
    p.add_argument("--n-pairs", dest="n_pairs", type=int)

    p = add("noise", "re-noise the LC frames of an existing dataset")
    p.add_argument("--data", required=True, help="dataset directory from synth")
    p.add_argument("--noise", required=True)

    p = add("train", "train a denoiser on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", choices=("vdsr", "irunet"))
    p.add_argument("--ensemble", action="store_true", help="one run per configured ensemble seed")

    p = add("denoise", "denoise DFRM frames with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--normalized", action="store_true", help="keep the [0, 1] network output")
    p.add_argument("frames", nargs="+")

    p = add("eval", "score a checkpoint on a dataset split")
    p.add_argument("--checkpoint", action="append", help="repeat together with --data for a matrix")
    p.add_argument("--data", action="append", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--input", default="lc", choices=("lc", "hc"), help="frame scored when no checkpoint is given")

    p = add("fit", "peak and probability-density fits")
    p.add_argument("--hc", nargs="+", help="HC stack frames (default: render the configured scene)")
    p.add_argument("--lc", nargs="+", help="LC stack frames matching --hc")
    p.add_argument("--do", nargs="+", help="normalized denoised stack frames")
    p.add_argument("--checkpoint", action="append", help="denoise the LC stack with this model (repeatable)")
    p.add_argument("--no-pdf", action="store_true")
    p.add_argument("--pdf-limit", type=int)

    p = add("report", "render plots from run directories")
    p.add_argument("--run", action="append", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        out = _run_dir(args, args.command)
        cfg.write(out / "config.txt")
        COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, DivergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FrameError, CheckpointError, CalibrationError, analysis.AnalysisError, OSError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
