import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pumpshape.errors import DomainError, ShapeError
from pumpshape.field_optics import (
    ComplexField, FarFieldMap, apply_phase, far_field, far_field_pitch, gaussian_beam,
    rescale_pattern, resample_pattern)
from pumpshape.turbulence import PhaseScreen, generate_screen

from conftest import lab_like


@pytest.mark.parametrize("waist_samples", [8, 12, 30])
def test_gaussian_power_integral(waist_samples):
    dx = 10e-6
    w = waist_samples * dx
    fld = gaussian_beam(w, 256, dx, 404e-9)
    assert fld.power == pytest.approx(math.pi * w**2 / 2, rel=0.01)
    assert np.all(fld.amplitude.imag == 0) and np.all(fld.amplitude.real > 0)


def test_gaussian_rejects_unresolved_waist():
    with pytest.raises(DomainError):
        gaussian_beam(3e-6, 64, 1e-6, 404e-9)


def test_crystal_geometry_far_field_waist():
    w0, lam, f = 0.7e-3, 404e-9, 0.3
    fld = gaussian_beam(w0, 512, 12.5e-6, lam, plane="crystal")
    ffm = far_field(fld, f, oversample=4)
    x = ffm.axis("x")
    prof = ffm.intensity.sum(axis=0)
    second = np.sum(prof * x**2) / prof.sum()
    # I ~ exp(-2 x^2 / w^2) has <x^2> = w^2 / 4
    assert 2 * math.sqrt(second) == pytest.approx(lam * f / (math.pi * w0), rel=0.02)
    assert lam * f / (math.pi * w0) == pytest.approx(55.1e-6, rel=2e-3)


def test_plane_wave_focuses_to_one_sample():
    fld = ComplexField(np.ones((64, 64), complex), 10e-6, 404e-9)
    ffm = far_field(fld, 0.3)
    assert ffm.intensity[32, 32] / ffm.intensity.sum() > 0.99


@pytest.mark.parametrize("oversample", [1, 2, 3])
def test_parseval(oversample, rng):
    amp = rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64))
    fld = ComplexField(amp, 7e-6, 808e-9)
    ffm = far_field(fld, 0.2, oversample)
    assert ffm.power == pytest.approx(fld.power, rel=1e-9)


def test_far_field_pitch():
    ffm = far_field(gaussian_beam(0.2e-3, 128, 10e-6, 404e-9), 0.3, 2)
    assert ffm.pitch == pytest.approx(0.3 * 404e-9 / (256 * 10e-6))
    assert far_field_pitch(128, 10e-6, 404e-9, 0.3) == pytest.approx(2 * ffm.pitch)


def test_far_field_rejects_non_power_of_two():
    with pytest.raises(DomainError):
        far_field(ComplexField(np.ones((48, 48), complex), 1e-5, 404e-9), 0.3)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), dr=st.integers(-20, 20), dc=st.integers(-20, 20))
def test_translation_leaves_intensity_unchanged(seed, dr, dc):
    r = np.random.default_rng(seed)
    amp = r.standard_normal((32, 32)) + 1j * r.standard_normal((32, 32))
    a = far_field(ComplexField(amp, 1e-5, 404e-9), 0.3)
    b = far_field(ComplexField(np.roll(amp, (dr, dc), axis=(0, 1)), 1e-5, 404e-9), 0.3)
    assert np.allclose(a.intensity, b.intensity, rtol=1e-9, atol=1e-12 * a.intensity.max())


def test_apply_phase_identity_and_modulus(rng):
    fld = gaussian_beam(0.2e-3, 64, 12.5e-6, 404e-9)
    screen = PhaseScreen(rng.uniform(-20, 20, (64, 64)), 12.5e-6)
    assert apply_phase(fld, screen, 0.0) is fld
    for c in (0.3, 1.0, 2.5):
        out = apply_phase(fld, screen, c)
        assert np.allclose(np.abs(out.amplitude), np.abs(fld.amplitude), rtol=0, atol=1e-15)


def test_apply_phase_inverse(rng):
    fld = gaussian_beam(0.2e-3, 64, 12.5e-6, 404e-9)
    phi = rng.uniform(-20, 20, (64, 64))
    back = apply_phase(apply_phase(fld, PhaseScreen(phi, 12.5e-6)), PhaseScreen(-phi, 12.5e-6))
    assert np.max(np.abs(back.amplitude - fld.amplitude)) < 1e-12


def test_apply_phase_uses_displayed_wrap():
    fld = gaussian_beam(0.2e-3, 64, 12.5e-6, 404e-9)
    phi = np.full((64, 64), 2 * np.pi + 0.5)
    out = apply_phase(fld, PhaseScreen(phi, 12.5e-6), 0.5)
    assert np.allclose(out.amplitude, fld.amplitude * np.exp(0.25j))


def test_apply_phase_grid_mismatch():
    fld = gaussian_beam(0.2e-3, 64, 12.5e-6, 404e-9)
    with pytest.raises(ShapeError):
        apply_phase(fld, PhaseScreen.zeros(32, 12.5e-6))
    with pytest.raises(ShapeError):
        apply_phase(fld, PhaseScreen.zeros(64, 10e-6))


def _smooth_map():
    ffm = far_field(gaussian_beam(0.15e-3, 128, 12.5e-6, 404e-9), 0.3, 2)
    return ffm


def test_rescale_identity():
    ffm = _smooth_map()
    assert rescale_pattern(ffm, 1.0) is ffm


def test_rescale_round_trip():
    ffm = _smooth_map()
    back = rescale_pattern(rescale_pattern(ffm, 2.0), 0.5)
    rms = np.sqrt(np.mean((back.intensity - ffm.intensity) ** 2))
    assert rms / np.sqrt(np.mean(ffm.intensity**2)) < 0.02


def test_rescale_magnifies_about_centre():
    ffm = _smooth_map()
    big = rescale_pattern(ffm, 2.0)
    # magnified Gaussian: second moment grows by four
    x = ffm.axis("x")
    m0 = np.sum(ffm.intensity.sum(0) * x**2) / ffm.intensity.sum()
    m1 = np.sum(big.intensity.sum(0) * x**2) / big.intensity.sum()
    assert m1 / m0 == pytest.approx(4.0, rel=0.02)
    with pytest.raises(DomainError):
        rescale_pattern(ffm, 0.0)


def test_resample_onto_shifted_grid():
    img = np.zeros((9, 9))
    img[4, 4] = 1.0
    ffm = FarFieldMap(img, 1.0, 1.0, 1.0)
    out = resample_pattern(ffm, 1.0, origin=(1.0, 0.0), shape=(9, 9))
    assert out.intensity[4, 3] == pytest.approx(1.0)
    half = resample_pattern(ffm, 0.5, shape=(9, 9))
    assert half.intensity[4, 5] == pytest.approx(0.5)
