"""Supervised LC -> HC training loop and inference."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ..frames import Frame, FramePair, NormalizationRecord, flip_axis_index, normalize_frame
from ..metrics import LossSpec, combined_loss, combined_loss_and_gradient
from ..noise import derive_seed
from .network import NetworkSpec, init_params, network_backward, network_forward
from .optim import IRUNET_SCHEDULE, VDSR_SCHEDULE, OptimizerState, StepSchedule, adam_amsgrad_step

log = logging.getLogger(__name__)

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None


class TrainingDiverged(FloatingPointError):
    def __init__(self, msg, history, best_params):
        super().__init__(msg)
        self.history = history
        self.best_params = best_params


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 5e-4
    batch_size: int = 8
    epochs: int = 250
    schedule_start: int = 150
    schedule_every: int = 50
    schedule_factor: float = 0.1
    flip_prob: float = 0.5
    seed: int = 0
    alpha: float = 0.7
    dtype: str = "float32"
    single_thread: bool = True
    correct_v: bool = True

    def __post_init__(self):
        if self.lr0 < 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError(f"invalid training config {self}")
        if not 0 <= self.flip_prob <= 1:
            raise ValueError("flip_prob must lie in [0, 1]")

    @classmethod
    def for_topology(cls, topology: str, **overrides) -> "TrainConfig":
        if topology == "vdsr":
            base = cls(lr0=VDSR_SCHEDULE.lr0, batch_size=8, epochs=250, schedule_start=150, schedule_every=50, schedule_factor=0.1)
        elif topology == "irunet":
            base = cls(lr0=IRUNET_SCHEDULE.lr0, batch_size=16, epochs=300, schedule_start=100, schedule_every=100, schedule_factor=0.5)
        else:
            raise ValueError(f"unknown topology {topology!r}")
        return replace(base, **overrides)

    @property
    def schedule(self) -> StepSchedule:
        return StepSchedule(self.lr0, self.schedule_start, self.schedule_every, self.schedule_factor)


def lr_schedule(config: TrainConfig, epoch: int) -> float:
    return config.schedule(epoch)


@dataclass
class HistoryRow:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    params: list[np.ndarray]  # at the best validation loss
    final_params: list[np.ndarray]
    history: list[HistoryRow] = field(default_factory=list)
    best_epoch: int = -1


def write_history(history: Sequence[HistoryRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "lr", "train_loss", "val_loss"])
        for row in history:
            writer.writerow([row.epoch, repr(row.lr), repr(row.train_loss), repr(row.val_loss)])


def read_history(path) -> list[HistoryRow]:
    with open(path, newline="") as fh:
        return [
            HistoryRow(int(r["epoch"]), float(r["lr"]), float(r["train_loss"]), float(r["val_loss"]))
            for r in csv.DictReader(fh)
        ]


def prepare_pairs(pairs: Sequence[FramePair], dtype=np.float32):
    """Normalize each LC and HC frame independently.

    Returns ``(lc, hc, flip_axes)`` with arrays shaped (N, 1, H, W).
    """
    lc, hc, axes = [], [], []
    for pair in pairs:
        lc.append(normalize_frame(pair.lc, f"{pair.pair_id}/lc")[0].intensities)
        hc.append(normalize_frame(pair.hc, f"{pair.pair_id}/hc")[0].intensities)
        axes.append(flip_axis_index(pair.lc))
    lc_arr = np.stack(lc).astype(dtype)[:, None]
    hc_arr = np.stack(hc).astype(dtype)[:, None]
    return lc_arr, hc_arr, np.asarray(axes)


def _flip(batch, coins, axes):
    out = batch.copy()
    for i in np.flatnonzero(coins):
        out[i] = np.flip(batch[i], axis=1 + axes[i])
    return out


def evaluate_loss(spec: NetworkSpec, params, lc, hc, loss: LossSpec, batch_size: int = 16) -> float:
    total = 0.0
    for start in range(0, len(lc), batch_size):
        out = network_forward(spec, params, lc[start : start + batch_size])
        total += float(np.sum(combined_loss(out[:, 0].astype(np.float64), hc[start : start + batch_size, 0], loss)))
    return total / len(lc)


def _train_impl(spec, config, train_pairs, val_pairs, params, on_epoch):
    dtype = np.dtype(config.dtype)
    loss_spec = LossSpec(alpha=config.alpha)
    lc, hc, axes = prepare_pairs(train_pairs, dtype)
    vlc, vhc, _ = prepare_pairs(val_pairs, dtype)
    if params is None:
        params = init_params(spec, derive_seed(config.seed, 0), dtype)
    params = [p.astype(dtype, copy=True) for p in params]
    state = OptimizerState.for_params(params, correct_v=config.correct_v)
    rng = np.random.default_rng(derive_seed(config.seed, 1))

    history: list[HistoryRow] = []
    best_params = [p.copy() for p in params]
    best_loss, best_epoch = np.inf, -1
    n = len(lc)
    for epoch in range(config.epochs):
        lr = lr_schedule(config, epoch)
        order = rng.permutation(n)
        coins = rng.random(n) < config.flip_prob
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = _flip(lc[idx], coins[idx], axes[idx])
            y = _flip(hc[idx], coins[idx], axes[idx])
            tape: list = []
            out = network_forward(spec, params, x, tape)
            losses, grad = combined_loss_and_gradient(out[:, 0].astype(np.float64), y[:, 0].astype(np.float64), loss_spec)
            losses = np.atleast_1d(losses)
            if not np.all(np.isfinite(losses)):
                raise TrainingDiverged(f"non-finite loss in epoch {epoch}", history, best_params)
            epoch_loss += float(losses.sum())
            grad_out = (grad / len(idx))[:, None].astype(dtype)
            grads, _ = network_backward(spec, params, tape, grad_out)
            try:
                adam_amsgrad_step(state, params, grads, lr)
            except FloatingPointError as exc:
                raise TrainingDiverged(str(exc), history, best_params) from exc
        val_loss = evaluate_loss(spec, params, vlc, vhc, loss_spec)
        if not np.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss in epoch {epoch}", history, best_params)
        row = HistoryRow(epoch, lr, epoch_loss / n, val_loss)
        history.append(row)
        log.info("epoch %d lr %.3g train %.5f val %.5f", epoch, lr, row.train_loss, val_loss)
        if val_loss < best_loss:
            best_loss, best_epoch = val_loss, epoch
            best_params = [p.copy() for p in params]
        if on_epoch is not None:
            on_epoch(row, params)
    return TrainResult(best_params, params, history, best_epoch)


def train(
    spec: NetworkSpec,
    config: TrainConfig,
    train_pairs: Sequence[FramePair],
    val_pairs: Sequence[FramePair],
    params: list[np.ndarray] | None = None,
    on_epoch: Callable[[HistoryRow, list], None] | None = None,
) -> TrainResult:
    """Train with Adam/AMSGrad on the combined loss; keeps the best-validation parameters.

    Per epoch the training pairs are shuffled, each pair is flipped along l with
    probability ``flip_prob`` (LC and HC together), and the learning rate
    follows the step schedule of ``config``.
    """
    if not train_pairs or not val_pairs:
        raise ValueError("training needs non-empty train and validation splits")
    if config.single_thread and threadpool_limits is not None:
        with threadpool_limits(limits=1):
            return _train_impl(spec, config, train_pairs, val_pairs, params, on_epoch)
    return _train_impl(spec, config, train_pairs, val_pairs, params, on_epoch)


def train_from_manifest(spec, config, manifest, root=None, **kw) -> TrainResult:
    return train(spec, config, manifest.load_pairs("train", root), manifest.load_pairs("val", root), **kw)


def _pad_to_multiple(a: np.ndarray, m: int):
    h, w = a.shape[-2:]
    ph, pw = (-h) % m, (-w) % m
    if ph == 0 and pw == 0:
        return a
    pad = [(0, 0)] * (a.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(a, pad, mode="reflect" if min(h, w) > max(ph, pw) else "edge")


def predict_normalized(params, spec: NetworkSpec, images, batch_size: int = 16) -> np.ndarray:
    """Denoise already-normalized images ``(N, H, W)``; output clamped to [0, 1]."""
    images = np.asarray(images)
    single = images.ndim == 2
    if single:
        images = images[None]
    h, w = images.shape[-2:]
    padded = _pad_to_multiple(images, spec.size_multiple)
    outs = []
    for start in range(0, len(padded), batch_size):
        out = network_forward(spec, params, padded[start : start + batch_size, None])
        outs.append(out[:, 0, :h, :w])
    result = np.clip(np.concatenate(outs).astype(np.float64), 0.0, 1.0)
    return result[0] if single else result


def denoise(params, spec: NetworkSpec, lc: Frame) -> Frame:
    """Normalize, run the network, clamp to [0, 1] and map back with the LC scaling."""
    norm, record = normalize_frame(lc)
    out = predict_normalized(params, spec, norm.intensities)
    return lc.with_intensities(np.where(lc.live, record.invert(out), 0.0))


def denoise_normalized(params, spec: NetworkSpec, lc: Frame) -> tuple[Frame, NormalizationRecord]:
    """Like :func:`denoise` but returns the [0, 1] output and the LC record."""
    norm, record = normalize_frame(lc)
    out = predict_normalized(params, spec, norm.intensities)
    return lc.with_intensities(np.where(lc.live, out, 0.0)), record
