"""DNET checkpoint container.

Layout (little-endian): magic ``DNET``, version u16, spec block length u32,
spec block (UTF-8 ``key=value`` lines: the network spec plus optional
metadata), array count u32, then per array: ndim u8, ndim x u32 dims,
float32 data.
"""

from __future__ import annotations

import struct

import numpy as np

from .network import NetworkSpec

MAGIC = b"DNET"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, spec: NetworkSpec, params, meta: dict | None = None) -> None:
    fields = dict(meta or {})
    fields.update(spec.to_dict())
    for k, v in fields.items():
        if "\n" in f"{k}{v}" or "=" in k:
            raise CheckpointError(f"metadata entry {k!r} cannot be stored")
    text = "".join(f"{k}={v}\n" for k, v in fields.items()).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(text)))
        fh.write(text)
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            p = np.asarray(p)
            fh.write(struct.pack("<B", p.ndim))
            fh.write(struct.pack(f"<{p.ndim}I", *p.shape))
            fh.write(p.astype("<f4").tobytes())


def _read(fh, n):
    data = fh.read(n)
    if len(data) < n:
        raise CheckpointError("truncated checkpoint")
    return data


def _read_fields(fh, path) -> dict:
    if _read(fh, 4) != MAGIC:
        raise CheckpointError(f"{path}: not a DNET checkpoint")
    version, n_text = struct.unpack("<HI", _read(fh, 6))
    if version != VERSION:
        raise CheckpointError(f"unsupported DNET version {version}")
    return dict(line.split("=", 1) for line in _read(fh, n_text).decode().splitlines() if line)


def checkpoint_meta(path) -> dict:
    """All text fields of the header (spec entries and metadata) as strings."""
    with open(path, "rb") as fh:
        return _read_fields(fh, path)


def load_checkpoint(path) -> tuple[NetworkSpec, list[np.ndarray]]:
    with open(path, "rb") as fh:
        fields = _read_fields(fh, path)
        spec = NetworkSpec(
            topology=fields["topology"],
            depth=int(fields["depth"]),
            filters=int(fields["filters"]),
            kernel=int(fields["kernel"]),
            stages=int(fields["stages"]),
        )
        (count,) = struct.unpack("<I", _read(fh, 4))
        params = []
        for _ in range(count):
            (ndim,) = struct.unpack("<B", _read(fh, 1))
            shape = struct.unpack(f"<{ndim}I", _read(fh, 4 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            params.append(np.frombuffer(_read(fh, 4 * size), dtype="<f4").reshape(shape).astype(np.float32))
    expected = []
    for shape in spec.layer_shapes():
        expected += [shape, (shape[0],)]
    if [p.shape for p in params] != expected:
        raise CheckpointError("checkpoint arrays do not match the stored network spec")
    return spec, params
