"""The two residual denoisers: a plain VDSR-style chain and an IRUNet-style
encoder/decoder, both predicting a residual that is added to the input.

Parameters are a flat list ``[w0, b0, w1, b1, ...]`` in layer order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers

TOPOLOGIES = ("vdsr", "irunet")


class DivergenceError(FloatingPointError):
    """A forward pass produced non-finite activations."""


@dataclass(frozen=True)
class NetworkSpec:
    topology: str = "vdsr"
    depth: int = 20
    filters: int = 64
    kernel: int = 3
    stages: int = 2  # irunet only: pooling stages in the encoder

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")
        if self.depth < 2:
            raise ValueError("depth must be >= 2")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ValueError("kernel size must be odd")
        if self.filters < 1:
            raise ValueError("filters must be >= 1")
        if self.topology == "irunet":
            blocks = 2 * self.stages + 1
            if self.stages < 1 or self.depth % blocks:
                raise ValueError(f"irunet depth {self.depth} must split evenly over {blocks} blocks")

    @property
    def per_block(self) -> int:
        return self.depth // (2 * self.stages + 1)

    @property
    def size_multiple(self) -> int:
        """Spatial dims of the input must be divisible by this."""
        return 2**self.stages if self.topology == "irunet" else 1

    def layer_shapes(self) -> list[tuple[int, int, int, int]]:
        f, k = self.filters, self.kernel
        shapes = [(f, f, k, k) for _ in range(self.depth)]
        shapes[0] = (f, 1, k, k)
        shapes[-1] = (1, f, k, k)
        return shapes

    def to_dict(self) -> dict:
        return dict(topology=self.topology, depth=self.depth, filters=self.filters, kernel=self.kernel, stages=self.stages)


def he_init(shape, fan_in: int, seed_or_rng=0, dtype=np.float64) -> np.ndarray:
    """Draw from N(0, 2 / fan_in)."""
    if fan_in <= 0:
        raise ValueError("fan_in must be positive")
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def init_params(spec: NetworkSpec, seed: int = 0, dtype=np.float32) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    params = []
    for shape in spec.layer_shapes():
        fan_in = shape[1] * shape[2] * shape[3]
        params.append(he_init(shape, fan_in, rng, dtype))
        params.append(np.zeros(shape[0], dtype=dtype))
    return params


def zero_params(spec: NetworkSpec, dtype=np.float64) -> list[np.ndarray]:
    out = []
    for shape in spec.layer_shapes():
        out += [np.zeros(shape, dtype=dtype), np.zeros(shape[0], dtype=dtype)]
    return out


def _conv(h, params, li, tape, relu):
    out, cache = layers.conv2d_forward(h, params[2 * li], params[2 * li + 1])
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite activation after conv layer {li}")
    if tape is not None:
        tape.append(("conv", li, cache))
    if relu:
        out, mask = layers.relu_forward(out)
        if tape is not None:
            tape.append(("relu", mask))
    return out


def network_forward(spec: NetworkSpec, params, x, tape: list | None = None) -> np.ndarray:
    """Run the network on ``x`` (N, 1, H, W); returns ``x + residual``.

    Pass a list as ``tape`` to record what :func:`network_backward` needs.
    """
    x = np.asarray(x, dtype=params[0].dtype)
    if x.ndim != 4 or x.shape[1] != 1:
        raise layers.ShapeError(f"expected (N, 1, H, W) input, got {x.shape}")
    m = spec.size_multiple
    if x.shape[2] % m or x.shape[3] % m:
        raise layers.ShapeError(f"{spec.topology} needs spatial dims divisible by {m}, got {x.shape[2:]}")
    last = spec.depth - 1
    h = x
    if spec.topology == "vdsr":
        for li in range(spec.depth):
            h = _conv(h, params, li, tape, relu=li != last)
    else:
        li = 0
        skips = []
        for s in range(spec.stages):
            for _ in range(spec.per_block):
                h = _conv(h, params, li, tape, True)
                li += 1
            skips.append(h)
            if tape is not None:
                tape.append(("save", s))
            h = layers.pool_forward(h)
            if tape is not None:
                tape.append(("pool",))
        for _ in range(spec.per_block):
            h = _conv(h, params, li, tape, True)
            li += 1
        for s in reversed(range(spec.stages)):
            h = layers.upsample_forward(h) + skips[s]
            if tape is not None:
                tape.append(("up",))
                tape.append(("add", s))
            for _ in range(spec.per_block):
                h = _conv(h, params, li, tape, relu=li != last)
                li += 1
    return x + h


def network_backward(spec: NetworkSpec, params, tape: list, grad_out: np.ndarray):
    """Backpropagate ``grad_out`` through a recorded forward pass.

    Returns ``(param_grads, grad_input)``; ``grad_input`` includes the global skip.
    """
    grads = [None] * len(params)
    skip_grads = {}
    g = grad_out
    # ops are recorded in forward order; "add" before its "up" going backwards
    for op in reversed(tape):
        kind = op[0]
        if kind == "relu":
            g = layers.relu_backward(g, op[1])
        elif kind == "conv":
            li, cache = op[1], op[2]
            g, gw, gb = layers.conv2d_backward(g, cache, params[2 * li])
            grads[2 * li], grads[2 * li + 1] = gw, gb
        elif kind == "add":
            skip_grads[op[1]] = g
        elif kind == "up":
            g = layers.upsample_backward(g)
        elif kind == "pool":
            g = layers.pool_backward(g)
        elif kind == "save":
            g = g + skip_grads.pop(op[1])
        else:
            raise ValueError(f"unknown tape op {kind}")
    return grads, g + grad_out
