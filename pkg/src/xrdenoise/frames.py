"""Frame data model, the DFRM container, normalization, splitting and flips."""

from __future__ import annotations

import csv
import io
import math
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np

MAGIC = b"DFRM"
FORMAT_VERSION = 1
# magic, version, height, width, flags, axis count, reserved, crc32 of the body
_HEADER = struct.Struct("<4sHIIBBBI")
_AXIS = struct.Struct("<cdd")
FLAG_MASK = 0x01
FLAG_AXES = 0x02

AXIS_LABELS = ("h", "k", "l")
SPLITS = ("train", "val", "test")


class FrameError(ValueError):
    """Base class for frame validation and container errors."""


class BadMagicError(FrameError):
    pass


class TruncatedFrameError(FrameError):
    pass


class NonFiniteFrameError(FrameError):
    pass


class CorruptFrameError(FrameError):
    pass


class ConstantFrameError(FrameError):
    pass


@dataclass(frozen=True)
class AxisSpec:
    """One reciprocal axis: ``coordinate(i) = origin + i * step`` in r.l.u."""

    label: str
    origin: float
    step: float

    def __post_init__(self):
        if self.label not in AXIS_LABELS:
            raise FrameError(f"axis label must be one of {AXIS_LABELS}, got {self.label!r}")
        if self.step == 0 or not math.isfinite(self.step) or not math.isfinite(self.origin):
            raise FrameError(f"axis {self.label}: step must be finite and nonzero")

    def coords(self, n: int) -> np.ndarray:
        return self.origin + self.step * np.arange(n)


@dataclass(frozen=True)
class ReciprocalAxes:
    """Axes of the two in-frame directions plus the optional stack direction.

    For the stack axis, ``origin`` is the coordinate of this particular frame.
    """

    rows: AxisSpec
    cols: AxisSpec
    stack: AxisSpec | None = None

    def __post_init__(self):
        labels = [a.label for a in self.all()]
        if len(set(labels)) != len(labels):
            raise FrameError(f"axis labels must be distinct, got {labels}")

    def all(self) -> list[AxisSpec]:
        return [a for a in (self.rows, self.cols, self.stack) if a is not None]

    def in_frame_index(self, label: str) -> int | None:
        if self.rows.label == label:
            return 0
        if self.cols.label == label:
            return 1
        return None


@dataclass(frozen=True, eq=False)
class Frame:
    """A single detector exposure stored as a ``(height, width)`` array."""

    intensities: np.ndarray
    dead_mask: np.ndarray | None = None
    axes: ReciprocalAxes | None = None

    def __post_init__(self):
        data = np.asarray(self.intensities)
        if data.ndim != 2:
            raise FrameError(f"intensities must be 2D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteFrameError("frame contains non-finite intensities")
        data = data.copy()
        mask = self.dead_mask
        if mask is not None:
            mask = np.asarray(mask, dtype=bool).copy()
            if mask.shape != data.shape:
                raise FrameError("dead_mask shape differs from intensities")
            data[mask] = 0
            mask.flags.writeable = False
        data.flags.writeable = False
        object.__setattr__(self, "intensities", data)
        object.__setattr__(self, "dead_mask", mask)

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.intensities.shape

    @property
    def live(self) -> np.ndarray:
        """Boolean array, True where the pixel is not dead."""
        if self.dead_mask is None:
            return np.ones(self.shape, dtype=bool)
        return ~self.dead_mask

    def with_intensities(self, values) -> "Frame":
        return Frame(np.asarray(values), self.dead_mask, self.axes)

    def same_geometry(self, other: "Frame") -> bool:
        if self.shape != other.shape or self.axes != other.axes:
            return False
        return np.array_equal(self.live, other.live)


@dataclass(frozen=True)
class FramePair:
    lc: Frame
    hc: Frame
    pair_id: str

    def __post_init__(self):
        if not self.lc.same_geometry(self.hc):
            raise FrameError(f"pair {self.pair_id}: LC and HC geometry differ")


@dataclass(frozen=True)
class ManifestEntry:
    pair_id: str
    lc_path: str
    hc_path: str
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise FrameError(f"unknown split tag {self.split!r}")


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.pair_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise FrameError("manifest pair_ids are not unique")

    def split(self, tag: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == tag]

    def counts(self) -> dict[str, int]:
        return {tag: len(self.split(tag)) for tag in SPLITS}

    def with_paths(self, paths: dict[str, tuple[str, str]]) -> "DatasetManifest":
        return DatasetManifest(
            [replace(e, lc_path=paths[e.pair_id][0], hc_path=paths[e.pair_id][1]) for e in self.entries]
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pair_id", "lc_path", "hc_path", "split"])
            for e in self.entries:
                writer.writerow([e.pair_id, e.lc_path, e.hc_path, e.split])

    @classmethod
    def read_csv(cls, path) -> "DatasetManifest":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["pair_id", "lc_path", "hc_path", "split"]:
                raise FrameError(f"{path}: bad manifest header {reader.fieldnames}")
            return cls([ManifestEntry(**row) for row in reader])

    def load_pairs(self, tag: str | None = None, root=None) -> list[FramePair]:
        """Load the pairs of one split (all when ``tag`` is None).

        Relative paths are resolved against ``root``.
        """
        root = Path(root) if root is not None else Path(".")
        entries = self.entries if tag is None else self.split(tag)
        return [
            FramePair(read_frame(root / e.lc_path), read_frame(root / e.hc_path), e.pair_id)
            for e in entries
        ]


@dataclass(frozen=True)
class NormalizationRecord:
    """Per-frame min-max used to map live pixels into [0, 1]."""

    minimum: float
    maximum: float
    scheme: str = "minmax-live"

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.minimum) / (self.maximum - self.minimum)

    def invert(self, values: np.ndarray) -> np.ndarray:
        return self.minimum + values * (self.maximum - self.minimum)


# ----------------------------------------------------------------------------
# DFRM container


def save_frame(frame: Frame, dest: BinaryIO) -> None:
    """Write ``frame`` to a binary sink in DFRM format."""
    data = np.asarray(frame.intensities)
    if not np.all(np.isfinite(data)):
        raise NonFiniteFrameError("refusing to save non-finite intensities")
    as32 = data.astype("<f4")
    if not np.all(np.isfinite(as32)):
        raise NonFiniteFrameError("intensities overflow float32")
    flags = 0
    body = [as32.tobytes()]
    if frame.dead_mask is not None:
        flags |= FLAG_MASK
        body.append(np.packbits(frame.dead_mask.ravel(), bitorder="little").tobytes())
    n_axes = 0
    if frame.axes is not None:
        flags |= FLAG_AXES
        axes = frame.axes.all()
        n_axes = len(axes)
        for ax in axes:
            body.append(_AXIS.pack(ax.label.encode("ascii"), ax.origin, ax.step))
    payload = b"".join(body)
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, frame.height, frame.width, flags, n_axes, 0, zlib.crc32(payload)
    )
    dest.write(header)
    dest.write(payload)


def load_frame(source: BinaryIO) -> Frame:
    """Read one DFRM frame from a binary source."""
    head = source.read(_HEADER.size)
    if len(head) < 4 or head[:4] != MAGIC:
        raise BadMagicError(f"not a DFRM container (magic {head[:4]!r})")
    if len(head) < _HEADER.size:
        raise TruncatedFrameError("truncated DFRM header")
    _, version, height, width, flags, n_axes, _, crc = _HEADER.unpack(head)
    if version != FORMAT_VERSION:
        raise FrameError(f"unsupported DFRM version {version}")
    n = height * width
    size = 4 * n
    if flags & FLAG_MASK:
        size += (n + 7) // 8
    if flags & FLAG_AXES:
        size += n_axes * _AXIS.size
    payload = source.read(size)
    if len(payload) < size:
        raise TruncatedFrameError(f"DFRM payload truncated: expected {size} bytes, got {len(payload)}")
    if zlib.crc32(payload) != crc:
        raise CorruptFrameError("DFRM checksum mismatch")

    data = np.frombuffer(payload, dtype="<f4", count=n).reshape(height, width)
    if not np.all(np.isfinite(data)):
        raise NonFiniteFrameError("DFRM payload contains non-finite values")
    offset = 4 * n
    mask = None
    if flags & FLAG_MASK:
        nbytes = (n + 7) // 8
        bits = np.frombuffer(payload, dtype=np.uint8, count=nbytes, offset=offset)
        mask = np.unpackbits(bits, count=n, bitorder="little").astype(bool).reshape(height, width)
        offset += nbytes
    axes = None
    if flags & FLAG_AXES:
        specs = []
        for _ in range(n_axes):
            label, origin, step = _AXIS.unpack_from(payload, offset)
            specs.append(AxisSpec(label.decode("ascii"), origin, step))
            offset += _AXIS.size
        if len(specs) not in (2, 3):
            raise FrameError(f"DFRM axes block must hold 2 or 3 axes, got {len(specs)}")
        axes = ReciprocalAxes(*specs)
    return Frame(data.astype(np.float32), mask, axes)


def write_frame(frame: Frame, path) -> None:
    with open(path, "wb") as fh:
        save_frame(frame, fh)


def read_frame(path) -> Frame:
    with open(path, "rb") as fh:
        return load_frame(fh)


def frame_bytes(frame: Frame) -> bytes:
    buf = io.BytesIO()
    save_frame(frame, buf)
    return buf.getvalue()


# ----------------------------------------------------------------------------
# Normalization, splitting, augmentation


def normalize_frame(frame: Frame, frame_id: str = "frame") -> tuple[Frame, NormalizationRecord]:
    """Min-max scale live pixels into [0, 1]; dead pixels stay 0."""
    live = frame.live
    if not live.any():
        raise ConstantFrameError(f"{frame_id}: no live pixels")
    values = np.asarray(frame.intensities, dtype=np.float64)
    lo = float(values[live].min())
    hi = float(values[live].max())
    if not hi > lo:
        raise ConstantFrameError(f"{frame_id}: constant frame (min = max = {lo})")
    record = NormalizationRecord(lo, hi)
    out = np.where(live, record.apply(values), 0.0)
    return frame.with_intensities(out), record


def denormalize_frame(frame: Frame, record: NormalizationRecord) -> Frame:
    values = np.asarray(frame.intensities, dtype=np.float64)
    return frame.with_intensities(np.where(frame.live, record.invert(values), 0.0))


def split_counts(n: int, fractions: Sequence[float]) -> tuple[int, int, int]:
    """Train/val/test sizes: val and test floored, the remainder goes to train."""
    _, f_val, f_test = fractions
    n_val = math.floor(n * f_val + 1e-9)
    n_test = math.floor(n * f_test + 1e-9)
    return n - n_val - n_test, n_val, n_test


def split_dataset(
    pair_ids: Sequence[str], fractions: Sequence[float] = (0.7, 0.2, 0.1), seed: int = 0
) -> DatasetManifest:
    """Shuffle ``pair_ids`` with ``seed`` and tag each one train/val/test."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise FrameError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")
    n = len(pair_ids)
    if all(f > 0 for f in fractions) and n < 3:
        raise FrameError(f"need at least 3 pairs for a three-way split, got {n}")
    n_train, n_val, _ = split_counts(n, fractions)
    order = np.random.default_rng(seed).permutation(n)
    tags = ["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val)
    entries = [ManifestEntry(pair_ids[i], "", "", tag) for i, tag in zip(order, tags)]
    return DatasetManifest(entries)


def flip_axis_index(frame: Frame) -> int:
    """Array axis holding the l direction (rows when axes are absent)."""
    if frame.axes is None:
        return 0
    idx = frame.axes.in_frame_index("l")
    if idx is None:
        raise FrameError("frame axes carry no in-frame l axis to flip")
    return idx


def flip_frame(frame: Frame, axis: int) -> Frame:
    data = np.flip(frame.intensities, axis=axis)
    mask = None if frame.dead_mask is None else np.flip(frame.dead_mask, axis=axis)
    axes = frame.axes
    if axes is not None:
        n = frame.shape[axis]
        old = axes.rows if axis == 0 else axes.cols
        new = AxisSpec(old.label, old.origin + (n - 1) * old.step, -old.step)
        axes = replace(axes, rows=new) if axis == 0 else replace(axes, cols=new)
    return Frame(data, mask, axes)


def augment_flip(pair: FramePair, coin: bool) -> FramePair:
    """Reverse both frames along l when ``coin`` is true.

    Axis metadata is rewritten (origin moved to the far end, step negated) so
    every pixel keeps its reciprocal coordinate.
    """
    if not coin:
        return pair
    axis = flip_axis_index(pair.lc)
    return FramePair(flip_frame(pair.lc, axis), flip_frame(pair.hc, axis), pair.pair_id)


def stack_intensities(frames: Iterable[Frame], dtype=np.float64) -> np.ndarray:
    return np.stack([np.asarray(f.intensities, dtype=dtype) for f in frames])
