import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pumpshape.errors import DomainError, GridRangeError
from pumpshape.field_optics import (FarFieldMap, apply_phase, far_field, gaussian_beam,
                                    rescale_pattern, resample_pattern)
from pumpshape.scenarios import scale_two_correlation
from pumpshape.spdc import (SpdcConfig, coincidence_pattern, effective_pair_field,
                            singles_envelope, singles_width_for)
from pumpshape.turbulence import PhaseScreen, generate_screen

from conftest import lab_like

N, DX, F = 128, 25e-6, 0.3


PUMP0 = gaussian_beam(0.7e-3, N, DX, 404e-9)


@pytest.fixture
def pump0():
    return PUMP0


def screen(seed, r0_factor=1.0):
    return generate_screen(lab_like(r0_factor), N, DX, seed)


def test_config_validation():
    with pytest.raises(DomainError):
        SpdcConfig(beta=0.0)
    with pytest.raises(DomainError):
        SpdcConfig(beta=1.5)
    cfg = SpdcConfig(idler_position=[1e-5, 0])
    assert cfg.idler_position == (1e-5, 0.0)
    assert cfg.pair_wavelength == pytest.approx(808e-9)


def test_beta_one_zero_control_is_pump_after_screen(pump0):
    s = screen(1)
    eff = effective_pair_field(pump0, PhaseScreen.zeros(N, DX), s, 1.0)
    assert np.array_equal(eff.amplitude, apply_phase(pump0, s, 1.0).amplitude)


@pytest.mark.parametrize("beta", [1.0, 0.7])
def test_conjugate_control_refocuses(pump0, beta):
    s = screen(2)
    control = PhaseScreen(-beta * s.wrapped(), DX)
    eff = effective_pair_field(pump0, control, s, beta)
    got = coincidence_pattern(eff, F)
    ref = coincidence_pattern(pump0, F)
    assert np.allclose(got.intensity, ref.intensity, rtol=1e-9, atol=1e-12 * ref.intensity.max())


def test_idler_offset_moves_spot_opposite(pump0):
    a = 3 * 2 * far_field(pump0, F).pitch
    cp = coincidence_pattern(pump0, F, idler_position=(a, 0.0))
    x, y = cp.axis("x"), cp.axis("y")
    w = cp.intensity
    assert np.sum(w.sum(0) * x) / w.sum() == pytest.approx(-a, rel=1e-9)
    assert abs(np.sum(w.sum(1) * y) / w.sum()) < 1e-12
    assert cp.origin == (-a, 0.0)


def test_idler_outside_plane(pump0):
    with pytest.raises(GridRangeError):
        coincidence_pattern(pump0, F, idler_position=(1.0, 0.0))


def test_pitch_doubles(pump0):
    for q in (1, 2):
        assert coincidence_pattern(pump0, F, oversample=q).pitch == pytest.approx(
            2 * far_field(pump0, F, q).pitch, rel=1e-15)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**5), beta=st.floats(0.3, 1.2))
def test_unit_normalisation(seed, beta):
    r = np.random.default_rng(seed)
    control = PhaseScreen(r.uniform(0, 2 * np.pi, (N, N)), DX)
    cp = coincidence_pattern(effective_pair_field(PUMP0, control, screen(seed % 7), beta), F)
    assert cp.intensity.sum() * cp.pitch**2 == pytest.approx(1.0, rel=1e-9)


@settings(max_examples=10, deadline=None)
@given(b1=st.floats(0.1, 0.6), b2=st.floats(0.1, 0.6), seed=st.integers(0, 50))
def test_phase_linearity(b1, b2, seed):
    s = screen(seed)
    zero = PhaseScreen.zeros(N, DX)
    two = effective_pair_field(effective_pair_field(PUMP0, zero, s, b1), zero, s, b2)
    one = effective_pair_field(PUMP0, zero, s, b1 + b2)
    assert np.max(np.abs(two.amplitude - one.amplitude)) < 1e-12


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10**5))
def test_beta_one_matches_rescaled_pump(seed):
    r = np.random.default_rng(seed)
    control = PhaseScreen(r.uniform(0, 2 * np.pi, (N, N)), DX)
    eff = effective_pair_field(PUMP0, control, screen(seed % 11), 1.0)
    pump = far_field(eff, F, 2)
    pair = coincidence_pattern(eff, F, oversample=2)
    magnified = rescale_pattern(pump, 2.0)
    onto = resample_pattern(pair, pump.pitch, pair.origin, pump.intensity.shape)
    a = magnified.intensity / magnified.intensity.sum()
    b = onto.intensity / onto.intensity.sum()
    assert np.sqrt(np.mean((a - b) ** 2)) / np.sqrt(np.mean(a**2)) < 0.02


def test_scale_two_correlation_drops_with_dispersion(pump0):
    zero = PhaseScreen.zeros(N, DX)
    lower = 0
    for seed in range(6):
        s = screen(seed)
        pump = far_field(apply_phase(pump0, s), F, 2)
        half = 0.5e-3
        rho1 = scale_two_correlation(
            pump, coincidence_pattern(effective_pair_field(pump0, zero, s, 1.0), F, oversample=2),
            half)
        rho7 = scale_two_correlation(
            pump, coincidence_pattern(effective_pair_field(pump0, zero, s, 0.7), F, oversample=2),
            half)
        assert rho1 > 0.95
        lower += rho7 < rho1
    assert lower == 6


def _like():
    return FarFieldMap(np.zeros((41, 41)), 25e-6, F, 808e-9)


def test_singles_transmission_scales_amplitude():
    cfg = SpdcConfig()
    a = singles_envelope(cfg, 1.0, _like()).intensity
    b = singles_envelope(cfg, 0.8, _like()).intensity
    assert np.allclose(b / a, 0.8, rtol=1e-12)
    with pytest.raises(DomainError):
        singles_envelope(cfg, 0.0, _like())


def test_singles_independent_of_pattern_content(pump0):
    cfg = SpdcConfig()
    p1 = coincidence_pattern(pump0, F)
    p2 = coincidence_pattern(apply_phase(pump0, screen(5)), F)
    assert np.array_equal(singles_envelope(cfg, 0.9, p1).intensity,
                          singles_envelope(cfg, 0.9, p2).intensity)


def test_singles_calibration_after_shaping_loss():
    like = _like()
    half_diag = math.sqrt(2) * 20 * 25e-6
    cfg = SpdcConfig(singles_peak_rate=6500, singles_width=singles_width_for(6500, 4500, half_diag))
    before = singles_envelope(cfg, 1.0, like).intensity
    assert before.max() == pytest.approx(6500)
    assert before.min() == pytest.approx(4500, rel=1e-9)
    after = singles_envelope(cfg, 0.82, like).intensity
    assert after.min() == pytest.approx(3700, rel=0.01)
    assert after.max() == pytest.approx(5300, rel=0.01)
