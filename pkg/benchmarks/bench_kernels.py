"""Compare the compiled and NumPy kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times each kernel on representative shapes plus one full training step of
the desk-scale VDSR (depth 6, 16 filters, batch 8 of 64x64) with the
backend swapped in, and checks that both backends agree bit for bit.
"""

import argparse
import timeit

import numpy as np

from xrdenoise import kernels
from xrdenoise.metrics import combined_loss_and_gradient
from xrdenoise.nn.network import NetworkSpec, init_params, network_backward, network_forward


def kernel_cases(rng):
    xpad = rng.standard_normal((8, 16, 66, 66)).astype(np.float32)
    cols = rng.standard_normal((16 * 9, 8 * 64 * 64)).astype(np.float32)
    mean = rng.uniform(0, 60, 64 * 64 * 50)
    u, z = rng.random(mean.size), rng.standard_normal(mean.size)
    padded, kern = rng.random((196, 246)), rng.random((5, 5))
    return {
        "im2col 8x16x64x64": lambda m: m.im2col(xpad, 3, 3),
        "col2im 8x16x64x64": lambda m: m.col2im(cols, 8, 16, 64, 64, 3, 3),
        "poisson 204800 draws": lambda m: m.poisson_sample(mean, u, z),
        "blur 5x5 on 192x242": lambda m: m.correlate2d_padded(padded, kern),
    }


def train_step(rng):
    spec = NetworkSpec("vdsr", 6, 16)
    params = init_params(spec, 0)
    x = rng.random((8, 1, 64, 64)).astype(np.float32)
    y = rng.random((8, 1, 64, 64)).astype(np.float32)

    def step(_m):
        tape = []
        out = network_forward(spec, params, x, tape)
        _, grad = combined_loss_and_gradient(out[:, 0].astype(np.float64), y[:, 0].astype(np.float64))
        network_backward(spec, params, tape, (grad / len(x))[:, None].astype(np.float32))

    return step


def timed(fn, module, repeat):
    return min(timeit.repeat(lambda: fn(module), number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    py = kernels.backend_module("python")
    try:
        cy = kernels.backend_module("cython")
    except ImportError:
        print("compiled extension not built; only the NumPy backend is available")
        return
    print(f"{'case':28s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s}  identical")
    for name, fn in kernel_cases(rng).items():
        same = np.array_equal(np.asarray(fn(py)), np.asarray(fn(cy)))
        tp, tc = timed(fn, py, args.repeat), timed(fn, cy, args.repeat)
        print(f"{name:28s} {tp * 1e3:11.2f} {tc * 1e3:12.2f} {tp / tc:8.2f}  {same}")

    step = train_step(rng)
    times = {}
    for label, module in (("numpy", py), ("cython", cy)):
        saved = kernels._impl
        kernels._impl = module
        try:
            times[label] = timed(step, module, args.repeat)
        finally:
            kernels._impl = saved
    print(f"{'train step (VDSR 6x16, b=8)':28s} {times['numpy'] * 1e3:11.2f} {times['cython'] * 1e3:12.2f} "
          f"{times['numpy'] / times['cython']:8.2f}")


if __name__ == "__main__":
    main()
