import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage, stats

from xrdenoise import noise, synth
from xrdenoise.frames import Frame, FramePair, frame_bytes


def frame(values, mask=None):
    return Frame(np.asarray(values, dtype=np.float64), mask)


# calibration ---------------------------------------------------------------


def test_calibrate_single_pair():
    lc = frame(np.tile([1.0, 3.0], (10, 5)))  # sum 200
    hc = frame(np.full((10, 10), 20.0))  # sum 2000
    cal = noise.calibrate([FramePair(lc, hc, "a")])
    assert cal.gamma == pytest.approx(0.1)
    assert cal.sigma == pytest.approx(1.0)
    with pytest.raises(noise.CalibrationError):
        noise.NoiseCalibration(0.1, 0.0)


def test_calibrate_odd_and_even_medians():
    hc = frame(np.full((2, 2), 25.0))  # sum 100
    pairs = [FramePair(frame([[r * 25, r * 25 + 1], [r * 25 - 1, r * 25]]), hc, str(r)) for r in (0.08, 0.10, 0.12)]
    cal = noise.calibrate(pairs)
    assert cal.gamma == pytest.approx(0.10)
    cal2 = noise.calibrate(pairs[:2])
    assert cal2.gamma == pytest.approx(0.09)
    stds = [np.std(p.lc.intensities) for p in pairs]
    assert cal.sigma == pytest.approx(np.median(stds))


def test_calibrate_errors_name_pair():
    with pytest.raises(noise.CalibrationError, match="bad"):
        noise.calibrate([FramePair(frame(np.ones((2, 2))), frame(np.zeros((2, 2))), "bad")])
    with pytest.raises(noise.CalibrationError):
        noise.calibrate([])


def test_calibrate_on_synthetic_exposure_ratio():
    _, hcs = synth.generate_dataset(synth.default_scene(), 40, 2 / 21, seed=3)
    pairs = [FramePair(noise.add_poisson(h, 2 / 21, i), h, str(i)) for i, h in enumerate(hcs)]
    gamma = noise.calibrate(pairs).gamma
    ratios = [p.lc.intensities.sum(dtype=np.float64) / p.hc.intensities.sum(dtype=np.float64) for p in pairs]
    assert gamma == pytest.approx(np.median(ratios), abs=1e-12)
    assert gamma == pytest.approx(0.095, abs=0.005)


# Poisson -------------------------------------------------------------------


def test_poisson_zero_frame():
    out = noise.add_poisson(frame(np.zeros((8, 8))), 0.5, 1)
    assert np.all(out.intensities == 0)


def test_poisson_moments_uniform_frame():
    out = noise.add_poisson(frame(np.full((1000, 1000), 1000.0)), 0.1, 2)
    v = np.asarray(out.intensities, dtype=np.float64)
    assert v.mean() == pytest.approx(100.0, rel=0.01)
    assert v.var() == pytest.approx(100.0, rel=0.02)


@pytest.mark.parametrize("mean", [50.0, 200.0])
def test_poisson_fano_factor(mean):
    v = np.asarray(noise.add_poisson(frame(np.full((1000, 1000), mean)), 1.0, 3).intensities, np.float64)
    assert v.var() / v.mean() == pytest.approx(1.0, abs=0.03)


def test_poisson_small_mean_matches_distribution():
    v = np.asarray(noise.add_poisson(frame(np.full((500, 500), 3.0)), 1.0, 4).intensities, np.float64)
    ks = np.arange(15)
    observed = np.array([(v == k).sum() for k in ks])
    expected = stats.poisson.pmf(ks, 3.0) * v.size
    chi2 = ((observed - expected) ** 2 / expected).sum()
    assert chi2 < stats.chi2.ppf(0.999, len(ks) - 1)


def test_poisson_large_mean_normal_deviation():
    mean = 400.0
    v = np.asarray(noise.add_poisson(frame(np.full((300, 300), mean)), 1.0, 5).intensities, np.float64)
    z = (v - mean) / np.sqrt(mean)
    assert abs(z.mean()) < 0.02 and z.std() == pytest.approx(1.0, abs=0.02)


def test_poisson_sampler_is_inverse_cdf():
    rng = np.random.default_rng(0)
    lam = rng.uniform(0, 29, 5000)
    u = rng.random(5000)
    out = noise.kernels.poisson_sample(lam, u, np.zeros(5000))
    assert np.array_equal(out, stats.poisson.ppf(u, lam))


def test_poisson_rejects_negative_and_keeps_dead():
    with pytest.raises(ValueError):
        noise.add_poisson(frame([[-1.0]]), 0.1, 0)
    mask = np.zeros((4, 4), bool)
    mask[1, 1] = True
    out = noise.add_poisson(frame(np.full((4, 4), 50.0), mask), 1.0, 0)
    assert out.intensities[1, 1] == 0


def test_gaussian_keeps_dead():
    mask = np.zeros((4, 4), bool)
    mask[2, 3] = True
    out = noise.add_gaussian(frame(np.where(mask, 0.0, 50.0), mask), 5.0, 0)
    assert out.intensities[2, 3] == 0
    assert np.all(out.intensities[~mask] != 50.0)


def test_generators_deterministic_and_independent():
    f = frame(np.full((300, 300), 40.0))
    a = noise.add_poisson(f, 1.0, 11)
    assert frame_bytes(a) == frame_bytes(noise.add_poisson(f, 1.0, 11))
    b = noise.add_poisson(f, 1.0, 12)
    ra = a.intensities.ravel() - 40
    rb = b.intensities.ravel() - 40
    assert abs(np.corrcoef(ra, rb)[0, 1]) < 0.01
    g1 = noise.add_gaussian(f, 2.0, 11).intensities - 40
    g2 = noise.add_gaussian(f, 2.0, 12).intensities - 40
    assert abs(np.corrcoef(g1.ravel(), g2.ravel())[0, 1]) < 0.01


# Gaussian ------------------------------------------------------------------


def test_gaussian_tiny_sigma_is_identity():
    f = frame(np.random.default_rng(0).random((16, 16)))
    out = noise.add_gaussian(f, 1e-12, 0)
    assert np.allclose(out.intensities, f.intensities, atol=1e-9)


def test_gaussian_statistics_and_negatives_kept():
    v = noise.add_gaussian(frame(np.zeros((1000, 1000))), 5.0, 1).intensities
    assert v.std() == pytest.approx(5.0, rel=0.01)
    assert abs(v.mean()) < 0.02
    assert v.min() < 0


def test_gaussian_noise_is_white():
    v = noise.add_gaussian(frame(np.zeros((1000, 1000))), 1.0, 2).intensities
    lag1 = np.mean(v[:, 1:] * v[:, :-1]) / np.mean(v * v)
    assert abs(lag1) < 0.01


def test_gaussian_rejects_nonpositive_sigma():
    with pytest.raises(ValueError):
        noise.add_gaussian(frame(np.zeros((2, 2))), 0.0, 0)


# blur ----------------------------------------------------------------------


def test_kernel_properties():
    k = noise.gaussian_kernel(0.4, 2)
    assert k.shape == (5, 5)
    assert k.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(k, k.T) and np.allclose(k, k[::-1, ::-1])


def test_blur_impulse_response():
    img = np.zeros((11, 11))
    img[5, 5] = 1.0
    out = noise.blur_frame(frame(img), 0.4).intensities
    stamp = out[3:8, 3:8]
    assert np.allclose(stamp, noise.gaussian_kernel(0.4, 2), atol=1e-6)
    assert out.sum() == pytest.approx(1.0, abs=1e-6)


def test_blur_uniform_unchanged():
    out = noise.blur_frame(frame(np.full((9, 12), 7.0)), 0.35).intensities
    assert np.allclose(out, 7.0, atol=1e-6)


def test_blur_matches_dense_oracle():
    img = np.random.default_rng(3).random((20, 17)) * 100
    k = noise.gaussian_kernel(0.4, 2)
    padded = np.pad(img, 2, mode="reflect")
    dense = np.zeros_like(img)
    for r in range(img.shape[0]):
        for c in range(img.shape[1]):
            dense[r, c] = np.sum(padded[r : r + 5, c : c + 5] * k)
    out = noise.blur_frame(frame(img), 0.4).intensities
    assert np.allclose(out, dense, atol=1e-6)
    assert np.allclose(out, ndimage.correlate(img, k, mode="mirror"), atol=1e-6)


def test_blur_std_drawn_in_range_and_conserves_intensity():
    spec = noise.NoiseSpec("poisson", noise.BlurSpec(), 0)
    stds = [noise.draw_blur_std(spec.blur, s) for s in range(200)]
    assert 0.3 <= min(stds) and max(stds) <= 0.5
    img = synth.render_frame(synth.default_scene(), 10).intensities
    out = noise.blur_random_kernel(frame(img), spec, 5).intensities
    assert out.sum() == pytest.approx(img.sum(), rel=0.005)


def test_blurred_noise_autocorrelation_matches_kernel():
    std = 0.4
    v = noise.blur_frame(noise.add_gaussian(frame(np.zeros((800, 800))), 1.0, 9), std).intensities
    lag1 = np.mean(v[:, 1:] * v[:, :-1]) / np.mean(v * v)
    g = np.exp(-0.5 * (np.arange(-2, 3) / std) ** 2)
    g /= g.sum()
    analytic = np.sum(g[1:] * g[:-1]) / np.sum(g * g)
    assert lag1 > 0
    assert lag1 == pytest.approx(analytic, rel=0.1)


def test_blur_spec_validation():
    with pytest.raises(ValueError):
        noise.BlurSpec(2, (0.0, 0.5))
    with pytest.raises(ValueError):
        noise.BlurSpec(0, (0.3, 0.5))
    with pytest.raises(ValueError):
        noise.BlurSpec(1, (0.3, 1.5))
    with pytest.raises(ValueError):
        noise.blur_random_kernel(frame(np.ones((3, 3))), noise.NoiseSpec("poisson", None), 0)


# composition ---------------------------------------------------------------

CAL = noise.NoiseCalibration(0.1, 2.0)


def test_pair_poisson_without_blur_equals_add_poisson():
    hc = frame(np.full((16, 16), 100.0))
    pair = noise.make_artificial_pair(hc, "poisson", CAL, False, seed=3, pair_id="x")
    ref = noise.add_poisson(hc, 0.1, noise.derive_seed(3, 0))
    assert frame_bytes(pair.lc) == frame_bytes(ref)
    assert pair.hc is hc and pair.pair_id == "x_pois"


def test_pair_gaussian_with_blur_order():
    hc = frame(np.random.default_rng(1).random((16, 16)) * 50)
    pair = noise.make_artificial_pair(hc, "gaussian", CAL, True, seed=4, pair_id="x")
    noisy = noise.add_gaussian(hc, 2.0, noise.derive_seed(4, 0))
    std = noise.draw_blur_std(noise.BlurSpec(), noise.derive_seed(4, 1))
    assert np.array_equal(pair.lc.intensities, noise.blur_frame(noisy, std).intensities)
    assert pair.pair_id == "x_gauss+g"


@pytest.mark.parametrize("label, parsed", [("pois", ("poisson", False)), ("gauss", ("gaussian", False)),
                                           ("pois+g", ("poisson", True)), ("gauss+g", ("gaussian", True)),
                                           ("exp", ("poisson", True))])
def test_labels(label, parsed):
    assert noise.parse_label(label) == parsed


def test_unknown_label():
    with pytest.raises(ValueError):
        noise.parse_label("speckle")
    with pytest.raises(ValueError):
        noise.NoiseSpec("uniform")


def test_experimental_like_default_is_poisson_plus_blur():
    hc = synth.render_frame(synth.default_scene(), 10)
    lc = noise.experimental_like_lc(hc, 2 / 21, 6)
    pair = noise.make_artificial_pair(hc, "poisson", noise.NoiseCalibration(2 / 21, 1.0), True, 6)
    assert frame_bytes(lc) == frame_bytes(pair.lc)
    assert pair.pair_id.endswith("pois+g")


@given(st.integers(0, 2**62), st.integers(0, 1000))
def test_derive_seed_is_stable_and_mixing(seed, idx):
    assert noise.derive_seed(seed, idx) == noise.derive_seed(seed, idx)
    assert noise.derive_seed(seed, idx) != noise.derive_seed(seed, idx + 1)
    assert 0 <= noise.derive_seed(seed, idx) < 2**63
