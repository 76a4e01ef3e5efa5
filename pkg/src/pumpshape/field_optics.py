"""
Sampled scalar fields, phase masks and the single-lens far-field transform.

All co-located planes (control modulator, crystal, turbulence modulator) are
imaged onto one another, so one grid with one pitch describes them. The only
propagation step kept is the Fourier lens in front of the detectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import DomainError, ShapeError
from .turbulence import PhaseScreen


@dataclass(frozen=True)
class ComplexField:
    amplitude: np.ndarray
    dx: float
    wavelength: float
    plane: str = "control"

    @property
    def n(self) -> int:
        return self.amplitude.shape[0]

    @property
    def power(self) -> float:
        """Total power, sum |a|^2 dx^2."""
        return float(np.sum(np.abs(self.amplitude) ** 2) * self.dx**2)

    def with_amplitude(self, amplitude: np.ndarray) -> "ComplexField":
        return replace(self, amplitude=amplitude)


@dataclass(frozen=True)
class FarFieldMap:
    """Intensity in a detector plane.

    Sample ``(i, j)`` sits at ``y = origin[1] + (i - n//2) * pitch``,
    ``x = origin[0] + (j - n//2) * pitch``; rows run along y.
    """

    intensity: np.ndarray
    pitch: float
    focal_length: float
    wavelength: float
    origin: tuple[float, float] = (0.0, 0.0)
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.intensity.shape[0]

    def axis(self, which: str = "x") -> np.ndarray:
        c = self.origin[0] if which == "x" else self.origin[1]
        return c + (np.arange(self.intensity.shape[1 if which == "x" else 0])
                    - self.intensity.shape[0] // 2) * self.pitch

    @property
    def power(self) -> float:
        return float(np.sum(self.intensity) * self.pitch**2)

    def with_intensity(self, intensity: np.ndarray) -> "FarFieldMap":
        return replace(self, intensity=intensity)


def grid_coordinates(n: int, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Centred sample coordinates; sample n//2 is the optical axis."""
    x = (np.arange(n) - n // 2) * dx
    yy, xx = np.meshgrid(x, x, indexing="ij")
    return xx, yy


def gaussian_beam(waist: float, n: int, dx: float, wavelength: float,
                  plane: str = "control") -> ComplexField:
    """Unit-peak Gaussian exp(-r^2 / w^2) centred on the grid."""
    if waist < 4 * dx:
        raise DomainError(f"waist {waist:g} m is under-resolved by pitch {dx:g} m (need >= 4 dx)")
    xx, yy = grid_coordinates(n, dx)
    amp = np.exp(-(xx**2 + yy**2) / waist**2).astype(complex)
    return ComplexField(amp, dx, wavelength, plane)


def check_congruent(fld: ComplexField, screen: PhaseScreen):
    if screen.phase.shape != fld.amplitude.shape or not np.isclose(screen.dx, fld.dx, rtol=1e-9):
        raise ShapeError(
            f"grid mismatch: field {fld.amplitude.shape} @ {fld.dx:g} m vs "
            f"screen {screen.phase.shape} @ {screen.dx:g} m")


def apply_phase(fld: ComplexField, screen: PhaseScreen, chromatic_factor: float = 1.0) -> ComplexField:
    """Multiply by exp(i * factor * phase), with the phase wrapped as displayed.

    The screen is shown modulo 2*pi; a beam whose wavelength or modulator
    response differs picks up ``chromatic_factor`` times the displayed value.
    """
    check_congruent(fld, screen)
    if chromatic_factor == 0:
        return fld
    return fld.with_amplitude(fld.amplitude * np.exp(1j * chromatic_factor * screen.wrapped()))


def _padded(amplitude: np.ndarray, oversample: int) -> np.ndarray:
    n = amplitude.shape[0]
    if oversample == 1:
        return amplitude
    m = n * oversample
    out = np.zeros((m, m), dtype=complex)
    s = (m - n) // 2
    out[s:s + n, s:s + n] = amplitude
    return out


def far_field_pitch(n: int, dx: float, wavelength: float, f: float, oversample: int = 1) -> float:
    return f * wavelength / (n * oversample * dx)


def far_field_amplitude(fld: ComplexField, f: float, oversample: int = 1) -> np.ndarray:
    """Centred DFT, scaled so that |.|^2 is intensity per unit detector area."""
    n = fld.n
    if n & (n - 1):
        raise DomainError(f"grid size must be a power of two, got {n}")
    m = n * oversample
    pitch = far_field_pitch(n, fld.dx, fld.wavelength, f, oversample)
    spec = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(_padded(fld.amplitude, oversample))))
    return spec * (fld.dx / (m * pitch))


def far_field(fld: ComplexField, f: float, oversample: int = 1) -> FarFieldMap:
    """Intensity behind a lens of focal length ``f``; pitch f * lambda / (n dx)."""
    amp = far_field_amplitude(fld, f, oversample)
    pitch = far_field_pitch(fld.n, fld.dx, fld.wavelength, f, oversample)
    return FarFieldMap(np.abs(amp) ** 2, pitch, f, fld.wavelength)


def resample_pattern(ffm: FarFieldMap, pitch: float, origin=(0.0, 0.0), shape=None) -> FarFieldMap:
    """Bilinear resampling of ``ffm`` onto another detector grid (zero outside)."""
    shape = ffm.intensity.shape if shape is None else shape
    ys = origin[1] + (np.arange(shape[0]) - shape[0] // 2) * pitch
    xs = origin[0] + (np.arange(shape[1]) - shape[1] // 2) * pitch
    rows = (ys - ffm.origin[1]) / ffm.pitch + ffm.intensity.shape[0] // 2
    cols = (xs - ffm.origin[0]) / ffm.pitch + ffm.intensity.shape[1] // 2
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    vals = ndimage.map_coordinates(ffm.intensity, [rr, cc], order=1, mode="constant", cval=0.0)
    return replace(ffm, intensity=vals, pitch=pitch, origin=tuple(origin))


def rescale_pattern(ffm: FarFieldMap, factor: float) -> FarFieldMap:
    """Magnify the pattern by ``factor`` about its centre, keeping the grid."""
    if factor <= 0:
        raise DomainError("scale factor must be positive")
    if factor == 1:
        return ffm
    # the same samples laid out at pitch*factor about the same centre
    shrunk = replace(ffm, pitch=ffm.pitch * factor)
    out = resample_pattern(shrunk, ffm.pitch, ffm.origin, ffm.intensity.shape)
    return replace(out, focal_length=ffm.focal_length, wavelength=ffm.wavelength)
