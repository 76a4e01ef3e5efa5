import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erf

from pumpshape.detection import (
    DetectionConfig, aperture_offsets, camera_capture, camera_geometry, expected_coincidences,
    scan_coincidences, scan_geometry, speckle_grain_area_pixels, subtract_accidentals)
from pumpshape.errors import DomainError, GridRangeError, StateError
from pumpshape.field_optics import FarFieldMap
from pumpshape.scenarios import build_config, build_link, make_screen


def flat_map(value=0.0, n=64, pitch=10e-6):
    return FarFieldMap(np.full((n, n), value), pitch, 0.3, 808e-9)


def gaussian_map(w, n=256, pitch=2e-6, peak=1.0):
    x = (np.arange(n) - n // 2) * pitch
    xx, yy = np.meshgrid(x, x)
    return FarFieldMap(peak * np.exp(-2 * (xx**2 + yy**2) / w**2), pitch, 0.3, 404e-9)


def test_config_rejects_bad_values():
    with pytest.raises(DomainError):
        DetectionConfig(scan_step=0)
    with pytest.raises(DomainError):
        DetectionConfig(exposure_per_point=-1)
    with pytest.raises(DomainError):
        DetectionConfig(scan_points=0)
    cfg = DetectionConfig()
    assert cfg.coincidence_window == 4e-9 and cfg.accidental_rate == 0.14
    assert cfg.camera_pixel == 4.8e-6 and cfg.collection_diameter == 50e-6


def test_accidental_only_poisson_statistics():
    cfg = DetectionConfig(scan_points=41, scan_step=10e-6, collection_diameter=20e-6,
                          exposure_per_point=10.0, seed=3)
    counts = scan_coincidences(flat_map(n=128), cfg).counts
    assert counts.size >= 1000
    assert counts.mean() == pytest.approx(1.4, abs=3 * math.sqrt(1.4 / counts.size))
    assert 0.8 <= counts.var(ddof=1) / counts.mean() <= 1.2
    assert counts.dtype.kind == "i" and counts.min() >= 0


@settings(max_examples=15, deadline=None)
@given(rate=st.floats(0.5, 50.0), seed=st.integers(0, 10**6))
def test_poisson_identity_for_constant_rate(rate, seed):
    cfg = DetectionConfig(scan_points=33, scan_step=10e-6, collection_diameter=10e-6,
                          accidental_rate=rate, exposure_per_point=1.0, seed=seed)
    counts = scan_coincidences(flat_map(n=96), cfg).counts
    assert 0.8 <= counts.var(ddof=1) / counts.mean() <= 1.2


def test_zero_exposure_gives_zero_counts():
    cfg = DetectionConfig(scan_points=9, exposure_per_point=0.0)
    assert not np.any(scan_coincidences(flat_map(1e6), cfg).counts)


def test_doubling_exposure_doubles_mean():
    base = DetectionConfig(scan_points=41, scan_step=10e-6, exposure_per_point=5.0, seed=1)
    a = scan_coincidences(flat_map(n=128), base).counts
    b = scan_coincidences(flat_map(n=128), replace(base, exposure_per_point=10.0, seed=2)).counts
    se = math.sqrt(b.var() / b.size + 4 * a.var() / a.size)
    assert abs(b.mean() - 2 * a.mean()) < 3 * se


def test_scan_outside_pattern_is_range_error():
    with pytest.raises(GridRangeError):
        scan_coincidences(flat_map(n=16), DetectionConfig(scan_points=41))


def test_scan_is_deterministic_under_seed():
    m = gaussian_map(40e-6, peak=1e9)
    cfg = DetectionConfig(scan_points=11, scan_step=5e-6, collection_diameter=10e-6, seed=9)
    assert np.array_equal(scan_coincidences(m, cfg).counts, scan_coincidences(m, cfg).counts)
    other = scan_coincidences(m, replace(cfg, seed=10)).counts
    assert not np.array_equal(scan_coincidences(m, cfg).counts, other)


def test_aperture_integral_of_constant_density():
    cfg = DetectionConfig(scan_points=5, collection_diameter=50e-6, accidental_rate=0.0,
                          exposure_per_point=1.0)
    mean = expected_coincidences(flat_map(2.0, n=64, pitch=5e-6), cfg)
    assert np.allclose(mean, 2.0 * math.pi * 25e-6**2, rtol=0.03)


def test_subtraction_is_unbiased_and_affine():
    cfg = DetectionConfig(scan_points=41, scan_step=10e-6, exposure_per_point=10.0, seed=4)
    raw = scan_coincidences(flat_map(n=128), cfg)
    cor = subtract_accidentals(raw, cfg)
    assert cor.corrected and not raw.corrected
    assert abs(cor.counts.mean()) < 3 * math.sqrt(1.4 / raw.counts.size)
    d_raw = raw.counts - raw.counts[0, 0]
    d_cor = cor.counts - cor.counts[0, 0]
    assert np.allclose(d_raw, d_cor, rtol=0, atol=1e-12)
    with pytest.raises(StateError):
        subtract_accidentals(cor, cfg)


def _contrast_check(scale, draws=200):
    cfg = build_config({"scenario": "speckle"}, seed=0)
    link = build_link(cfg, make_screen(cfg))
    dens = link.coincidence_density()
    dens = dens.with_intensity(dens.intensity * scale)
    det = replace(link.detection, exposure_per_point=30.0)
    rate = link.scan.read(dens.intensity)
    truth = rate.max() / rate.mean()
    rng = np.random.default_rng(11)
    got = []
    for _ in range(draws):
        r = subtract_accidentals(scan_coincidences(dens, det, link.scan, rng), det).rates
        got.append(r.max() / r.mean())
    return np.mean(got), truth


def test_corrected_scan_keeps_speckle_contrast():
    got, truth = _contrast_check(1.0)
    assert got == pytest.approx(truth, rel=0.05)


def test_corrected_scan_keeps_contrast_when_signal_dominates():
    got, truth = _contrast_check(1e4, draws=50)
    assert got == pytest.approx(truth, rel=0.05)


def test_camera_noiseless_is_exact_binning():
    m = gaussian_map(30e-6)
    cfg = DetectionConfig(camera_points=21, camera_exposure=2e-3, camera_gain=3.0)
    cap = camera_capture(m, cfg, shot_noise=False)
    geo = camera_geometry(m, cfg)
    assert np.array_equal(cap.counts, geo.read(m.intensity) * 3.0 * 2e-3)
    assert cap.kind == "camera" and cap.meta["shot_noise"] is False


def test_camera_pixel_integral_matches_erf():
    w, px = 30e-6, 4.8e-6
    m = gaussian_map(w, n=512, pitch=0.5e-6)
    cfg = DetectionConfig(camera_points=9, camera_pixel=px, camera_exposure=1.0)
    cap = camera_capture(m, cfg, shot_noise=False).counts
    s = w / 2  # exp(-2 r^2 / w^2) = exp(-r^2 / (2 s^2))

    def one_d(c):
        return s * math.sqrt(math.pi / 2) * (erf((c + px / 2) / (s * math.sqrt(2)))
                                             - erf((c - px / 2) / (s * math.sqrt(2))))
    centres = (np.arange(9) - 4) * px
    exact = np.outer([one_d(c) for c in centres], [one_d(c) for c in centres])
    assert np.allclose(cap, exact, rtol=2e-3)


def test_camera_total_linear_in_exposure():
    m = gaussian_map(30e-6)
    cfg = DetectionConfig(camera_points=21)
    a = camera_capture(m, replace(cfg, camera_exposure=1e-4), shot_noise=False).counts.sum()
    b = camera_capture(m, replace(cfg, camera_exposure=3e-4), shot_noise=False).counts.sum()
    assert b == pytest.approx(3 * a, rel=1e-12)


def test_camera_shot_noise_is_seeded():
    m = gaussian_map(30e-6, peak=1e9)
    cfg = DetectionConfig(camera_points=21, seed=5)
    a, b = camera_capture(m, cfg), camera_capture(m, cfg)
    assert np.array_equal(a.counts, b.counts) and a.counts.dtype.kind == "i"


def test_grain_area_about_hundred_pixels():
    area = speckle_grain_area_pixels(404e-9, 0.3, 1.4e-3, 4.8e-6)
    assert 70 <= area <= 130


@settings(max_examples=20, deadline=None)
@given(d1=st.floats(5e-6, 60e-6), extra=st.floats(0.0, 40e-6), seed=st.integers(0, 1000))
def test_aperture_monotonicity(d1, extra, seed):
    r = np.random.default_rng(seed)
    m = FarFieldMap(r.exponential(1.0, (96, 96)), 5e-6, 0.3, 808e-9)
    small = DetectionConfig(scan_points=7, scan_step=20e-6, collection_diameter=d1)
    big = replace(small, collection_diameter=d1 + extra)
    a = expected_coincidences(m, small, scan_geometry(m, small))
    b = expected_coincidences(m, big, scan_geometry(m, big))
    assert np.all(b >= a - 1e-12 * np.abs(a).max())


def test_aperture_offsets_nested():
    h = 1e-6
    small = {tuple(p) for p in np.round(aperture_offsets(10e-6, h) / h).astype(int)}
    big = {tuple(p) for p in np.round(aperture_offsets(14e-6, h) / h).astype(int)}
    assert small < big
