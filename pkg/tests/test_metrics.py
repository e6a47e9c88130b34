import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import correlated_pair
from xrdenoise import metrics
from xrdenoise.metrics import LossSpec, MssimParams


def test_mae_examples():
    assert metrics.mae(np.zeros((4, 4)), np.ones((4, 4))) == pytest.approx(1.0)
    x = np.array([[0.0, 1.0], [2.0, 3.0]])
    assert metrics.mae(x, np.zeros((2, 2))) == pytest.approx(1.5)
    assert metrics.mae(x, x) == 0.0
    batch = metrics.mae(np.stack([x, x]), np.stack([x, x + 0.5]))
    assert np.allclose(batch, [0.0, 0.5])
    with pytest.raises(ValueError):
        metrics.mae(np.zeros((2, 2)), np.zeros((2, 3)))


def mssim_oracle(x, y, p=MssimParams()):
    """Textbook multi-scale SSIM with whole-image statistics and separate c and s terms."""
    c1, c2 = p.c1, p.c2
    c3 = c2 / 2
    w = p.weights_for(x.shape)
    value = 1.0
    for j in range(len(w)):
        sx, sy = x.std(), y.std()
        cov = ((x - x.mean()) * (y - y.mean())).mean()
        c = (2 * sx * sy + c2) / (sx**2 + sy**2 + c2)
        s = (cov + c3) / (sx * sy + c3)
        value *= max(c * s, 0.0) ** w[j]
        if j == len(w) - 1:
            l = (2 * x.mean() * y.mean() + c1) / (x.mean() ** 2 + y.mean() ** 2 + c1)
            value *= abs(l) ** w[j]
        else:
            h, wd = x.shape[0] // 2, x.shape[1] // 2
            x = x[: 2 * h, : 2 * wd].reshape(h, 2, wd, 2).mean(axis=(1, 3))
            y = y[: 2 * h, : 2 * wd].reshape(h, 2, wd, 2).mean(axis=(1, 3))
    return value


@pytest.mark.parametrize("shape", [(64, 64), (32, 32), (64, 48), (17, 23), (8, 8)])
def test_mssim_matches_step_by_step_oracle(rng, shape):
    x, y = correlated_pair(rng, shape, 0.2)
    assert metrics.mssim(x, y) == pytest.approx(mssim_oracle(x, y), abs=1e-10)


def test_mssim_identity_and_range(rng):
    x = rng.random((32, 32))
    assert metrics.mssim(x, x) == pytest.approx(1.0, abs=1e-12)
    x, y = correlated_pair(rng, (32, 32), 0.3)
    assert 0 < metrics.mssim(x, y) < 1


def test_mssim_checkerboard_against_inverse_is_zero():
    board = np.indices((32, 32)).sum(axis=0) % 2 * 1.0
    assert metrics.mssim(board, 1 - board) == pytest.approx(0.0, abs=1e-6)


def test_mssim_flat_images_finite():
    z = np.zeros((16, 16))
    assert metrics.mssim(z, z) == pytest.approx(1.0)
    g = metrics.mssim_gradient(z, z)
    assert np.all(np.isfinite(g))


@given(st.integers(0, 2**32 - 1))
def test_mssim_symmetric(seed):
    x, y = correlated_pair(np.random.default_rng(seed), (16, 16), 0.3)
    assert metrics.mssim(x, y) == pytest.approx(metrics.mssim(y, x), abs=1e-12)


def test_mssim_batch_equals_loop(rng):
    pairs = [correlated_pair(rng, (16, 16), 0.2) for _ in range(4)]
    xs, ys = np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])
    assert np.allclose(metrics.mssim(xs, ys), [metrics.mssim(x, y) for x, y in pairs], atol=1e-14)


def test_weights_truncated_for_small_images():
    p = MssimParams()
    assert len(p.weights_for((64, 64))) == 5
    w = p.weights_for((4, 4))
    assert len(w) == 3 and w.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        MssimParams(weights=(0.5, 0.2))


def _numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


def test_mssim_gradient_finite_differences(rng):
    x, y = correlated_pair(rng, (16, 16), 0.2)
    x = np.clip(x, 0.05, 0.95)  # keep away from clip kinks
    num = _numeric_grad(lambda a: metrics.mssim(a, y), x)
    ana = metrics.mssim_gradient(x, y)
    assert np.allclose(ana, num, atol=1e-7, rtol=1e-4)


def test_combined_gradient_finite_differences(rng):
    x, y = correlated_pair(rng, (8, 8), 0.2)
    x = x + 1e-3 * (np.abs(x - y) < 1e-4)  # avoid the MAE kink
    num = _numeric_grad(lambda a: metrics.combined_loss(a, y), x)
    _, ana = metrics.combined_loss_and_gradient(x, y)
    assert np.allclose(ana, num, atol=1e-7, rtol=1e-4)


def test_gradient_step_increases_mssim(rng):
    x, y = correlated_pair(rng, (32, 32), 0.3)
    before = metrics.mssim(x, y)
    after = metrics.mssim(x + 1e-3 * metrics.mssim_gradient(x, y) / np.abs(metrics.mssim_gradient(x, y)).max(), y)
    assert after > before


def test_combined_loss_assembly(rng):
    x, y = correlated_pair(rng, (32, 32), 0.2)
    for alpha in (0.0, 0.7, 1.0):
        spec = LossSpec(alpha=alpha)
        expected = (1 - alpha) * metrics.mae(x, y) + alpha * (1 - metrics.mssim(x, y))
        assert metrics.combined_loss(x, y, spec) == pytest.approx(expected, abs=1e-14)
        assert metrics.quality(x, y, spec) == pytest.approx(1 - expected, abs=1e-14)
    assert metrics.combined_loss(y, y) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        LossSpec(alpha=1.5)


def test_psnr_examples():
    assert metrics.psnr(np.zeros((4, 4)), np.ones((4, 4))) == pytest.approx(0.0)
    y = np.zeros((10, 10))
    x = np.full((10, 10), 0.01)  # MSE 1e-4
    assert metrics.psnr(x, y) == pytest.approx(40.0)
    assert metrics.psnr(y, y) == metrics.PSNR_CAP_DB
    assert metrics.psnr(x * 100, y, peak=100.0) == pytest.approx(40.0)
    with pytest.raises(ValueError):
        metrics.psnr(x, y, peak=0)


@given(arrays(np.float64, (6, 6), elements=st.floats(0, 1)), st.floats(1e-3, 0.5))
def test_psnr_decreases_with_error(y, eps):
    assert metrics.psnr(y + eps, y) > metrics.psnr(y + 2 * eps, y)


def test_delta_heatmap_examples():
    hc = np.array([[1.0, 0.0, 2.0, 0.0]])
    do = np.array([[1.0, 0.0, 0.0, 3.0]])
    assert np.allclose(metrics.delta_heatmap(hc, do), [[0.0, 0.0, 1.0, -1.0]])
    d = metrics.delta_heatmap(np.array([[3.0]]), np.array([[1.0]]))
    assert d[0, 0] == pytest.approx(0.5)
    disp = metrics.delta_display(np.array([0.0, 1e-7, 0.01, -1.0]))
    assert np.allclose(disp, [-5.0, -5.0, -2.0, 0.0])


@given(arrays(np.float64, (5, 5), elements=st.floats(0, 100)), arrays(np.float64, (5, 5), elements=st.floats(0, 100)))
def test_delta_bounded_and_antisymmetric(a, b):
    d = metrics.delta_heatmap(a, b)
    assert np.all(np.abs(d) <= 1.0 + 1e-12)
    assert np.allclose(d, -metrics.delta_heatmap(b, a))


def test_pool_adjoint(rng):
    a, g = rng.random((2, 9, 7)), rng.random((2, 4, 3))
    assert np.sum(metrics.pool2(a) * g) == pytest.approx(np.sum(a * metrics.pool2_adjoint(g, a.shape)))
    assert math.isclose(metrics.pool2(np.ones((4, 4)))[0, 0], 1.0)


def test_mae_matches_per_pixel_oracle(rng):
    x, y = rng.random((13, 7)), rng.random((13, 7))
    total = 0.0
    for i in range(13):
        for j in range(7):
            total += abs(x[i, j] - y[i, j])
    assert metrics.mae(x, y) == pytest.approx(total / 91, abs=1e-12)
    assert metrics.mae([[0.0, 0.0]], [[1.0, 1.0]]) == 1.0


def test_mssim_gradient_at_symmetric_point(rng):
    y = rng.random((16, 16))
    num = _numeric_grad(lambda a: metrics.mssim(a, y), y.copy())
    assert np.allclose(metrics.mssim_gradient(y, y), num, atol=1e-7)


def test_gradient_points_back_to_target(rng):
    y = rng.random((32, 32))
    x = y + 0.05
    assert np.sum(metrics.mssim_gradient(x, y) * (y - x)) > 0


@given(st.integers(0, 2**32 - 1))
def test_mssim_at_most_one(seed):
    x, y = correlated_pair(np.random.default_rng(seed), (16, 16), 0.3)
    assert metrics.mssim(x, y) <= 1 + 1e-9
    assert metrics.combined_loss(x, y) > 0


def test_delta_identical_and_oracle(rng):
    a = rng.random((6, 6))
    assert not metrics.delta_heatmap(a, a).any()
    assert np.all(metrics.delta_display(metrics.delta_heatmap(a, a)) == -5.0)
    b = rng.random((6, 6))
    ref = np.array([[(a[i, j] - b[i, j]) / (a[i, j] + b[i, j]) for j in range(6)] for i in range(6)])
    assert np.allclose(metrics.delta_heatmap(a, b), ref, atol=1e-12)
