import logging
import math

import numpy as np
import pytest

from xrdenoise import analysis, synth
from xrdenoise.frames import frame_bytes


def bare_scene(**kw):
    base = dict(background=0.0, gradient_rows=0.0, gradient_cols=0.0, dead_fraction=0.0,
                jitter_amplitude=0.0, jitter_shift=0.0)
    base.update(kw)
    return synth.SceneSpec(**base)


def test_empty_scene_is_uniform_background():
    f = synth.render_frame(bare_scene(background=100.0), 0, seed=1)
    assert np.all(f.intensities == 100.0)


def test_centered_rod_maximum():
    scene = bare_scene()
    rod = synth.Rod((0.23, 0.0, 8.5), 50.0, 0.01, 0.008, 0.3)
    scene = bare_scene(rods=(rod,))
    f = synth.render_frame(scene, 10, seed=0)  # k = 0 at index 10
    r, c = np.unravel_index(np.argmax(f.intensities), f.shape)
    assert abs(r - 32) <= 1 and abs(c - 32) <= 1
    assert f.intensities.max() <= 50.0 + 1e-4


def test_rendering_is_deterministic_and_nonnegative():
    scene = synth.default_scene()
    a = synth.render_frame(scene, 3, seed=9)
    b = synth.render_frame(scene, 3, seed=9)
    assert frame_bytes(a) == frame_bytes(b)
    assert a.intensities.min() >= 0
    assert a.dead_mask.sum() == round(0.001 * 64 * 64)
    assert np.all(a.intensities[a.dead_mask] == 0)


def test_k_index_validated():
    with pytest.raises(ValueError):
        synth.render_frame(synth.default_scene(), 21)


def test_outside_feature_warns(caplog):
    rod = synth.Rod((5.0, 0.0, 8.5), 10.0, 0.01, 0.008, 0.3)
    with caplog.at_level(logging.WARNING):
        synth.render_frame(bare_scene(rods=(rod,)), 0)
    assert "outside" in caplog.text


def test_rod_integral_matches_gaussian_norms():
    rod = synth.default_rod()
    scene = bare_scene(rods=(rod,))
    stack = synth.render_stack(scene)
    total = sum(float(np.sum(f.intensities, dtype=np.float64)) for f in stack)
    volume = abs(scene.rows.step * scene.cols.step * scene.stack.step)
    expected = rod.amplitude * (2 * math.pi) ** 1.5 * rod.sigma_h * rod.sigma_k * rod.sigma_l
    assert total * volume == pytest.approx(expected, rel=0.01)


def test_sigma_for_correlation_length_roundtrip():
    s = synth.sigma_for_correlation_length(50.0, synth.LATTICE_A)
    hwhm = s * synth.HWHM_PER_SIGMA * 2 * math.pi / synth.LATTICE_A
    assert 1 / hwhm == pytest.approx(50.0, rel=1e-12)


def test_default_scene_fits_recover_targets():
    stack = synth.render_stack(synth.default_scene(), seed=1)
    win = {"h": 0.01, "k": 0.008, "l": 0.3}
    fits = {}
    for axis in "hlk":
        scan = analysis.subtract_background(analysis.project_scan(stack, (0.23, 0.0, 8.5), axis, win), 0.25)
        fits[axis] = analysis.fit_gaussian_1d(scan)
    assert analysis.correlation_length(fits["h"], synth.LATTICE_A) == pytest.approx(50.0, abs=2.0)
    assert analysis.correlation_length(fits["l"], synth.LATTICE_C) == pytest.approx(6.0, abs=0.3)
    rod = synth.default_rod()
    # true peak parameters recovered within 2%
    assert fits["h"].sigma == pytest.approx(rod.sigma_h, rel=0.02)
    assert fits["l"].sigma == pytest.approx(rod.sigma_l, rel=0.02)
    assert fits["k"].sigma == pytest.approx(rod.sigma_k, rel=0.02)
    assert fits["h"].center == pytest.approx(0.23, abs=0.0025)


def test_single_pair_without_jitter_equals_render_frame():
    scene = bare_scene(rods=(synth.default_rod(),), background=20.0, dead_fraction=0.01)
    truth, frames = synth.generate_dataset(scene, 1, seed=4)
    ref = synth.render_frame(scene, truth.k_indices[0], truth.detector_seed)
    assert frame_bytes(frames[0]) == frame_bytes(ref)


def test_dataset_reproducible():
    a = synth.generate_dataset(synth.default_scene(), 200, seed=7)[1]
    b = synth.generate_dataset(synth.default_scene(), 200, seed=7)[1]
    assert b"".join(map(frame_bytes, a)) == b"".join(map(frame_bytes, b))
    c = synth.generate_dataset(synth.default_scene(), 200, seed=8)[1]
    assert b"".join(map(frame_bytes, a)) != b"".join(map(frame_bytes, c))


def test_exposure_ratio_before_noise():
    truth, frames = synth.generate_dataset(synth.default_scene(), 5, 2 / 21, seed=0)
    for hc, lc in zip(frames, truth.clean_lc()):
        ratio = lc.intensities.sum(dtype=np.float64) / hc.intensities.sum(dtype=np.float64)
        assert ratio == pytest.approx(0.095, abs=0.0005)


def test_jitter_bounds():
    scene = synth.default_scene()
    truth, _ = synth.generate_dataset(scene, 50, seed=2)
    for sc in truth.scenes:
        rod = sc.rods[0]
        assert 36.0 <= rod.amplitude <= 44.0
        assert abs(rod.center[0] - 0.23) <= 2 * scene.cols.step + 1e-12
        assert abs(rod.center[2] - 8.5) <= 2 * scene.rows.step + 1e-12


def test_truth_csv(tmp_path):
    truth, _ = synth.generate_dataset(synth.default_scene(), 3, seed=0)
    truth.write_peaks_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0].startswith("pair_index,k_index,rod,h0")
    assert len(lines) == 4
