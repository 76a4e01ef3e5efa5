"""
Two-photon coincidence patterns in the thin-crystal regime.

The pump angular spectrum is copied onto the pair amplitude, so with the idler
detector fixed the coincidence rate versus signal position is the far field of
an "effective" pump-plane field, relabelled to pair-wavelength coordinates.
The control phase is imprinted on the pump before the crystal (factor 1); the
turbulence screen acts on the pair after the crystal (factor ``beta``).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import DomainError, GridRangeError
from .field_optics import (ComplexField, FarFieldMap, check_congruent, apply_phase,
                           far_field)
from .turbulence import PhaseScreen

PUMP_WAVELENGTH = 404e-9


@dataclass(frozen=True)
class SpdcConfig:
    """Pair-source settings.

    ``beta`` is the phase the photon pair picks up per radian of pump phase
    displayed on the turbulence modulator: 1.0 without dispersion, about 0.7
    for the liquid-crystal material. ``peak_rate`` (counts/s at the
    unscattered focus) is an arbitrary plumbing default, not a measured value.
    """

    pump_wavelength: float = PUMP_WAVELENGTH
    beta: float = 1.0
    idler_position: tuple[float, float] = (0.0, 0.0)
    peak_rate: float = 5.0
    singles_peak_rate: float = 6500.0
    singles_width: float = 2.0e-3
    schmidt_number: float = 680.0

    def __post_init__(self):
        if self.pump_wavelength <= 0:
            raise DomainError("pump wavelength must be positive")
        if not 0 < self.beta <= 1.2:
            raise DomainError(f"beta must lie in (0, 1.2], got {self.beta}")
        if self.peak_rate <= 0 or self.singles_peak_rate <= 0 or self.singles_width <= 0:
            raise DomainError("rates and singles width must be positive")
        object.__setattr__(self, "idler_position",
                           tuple(float(v) for v in self.idler_position))

    @property
    def pair_wavelength(self) -> float:
        return 2 * self.pump_wavelength

    def to_dict(self) -> dict:
        d = asdict(self)
        d["idler_position"] = list(self.idler_position)
        d["pair_wavelength"] = self.pair_wavelength
        return d


def effective_pair_field(pump0: ComplexField, control: PhaseScreen, atmosphere: PhaseScreen,
                         beta: float) -> ComplexField:
    """pump0 * exp(i control) * exp(i beta atmosphere) on the shared plane."""
    check_congruent(pump0, control)
    check_congruent(pump0, atmosphere)
    shaped = apply_phase(pump0, control, 1.0)
    return replace(apply_phase(shaped, atmosphere, beta), plane="crystal")


def coincidence_pattern(effective: ComplexField, f: float,
                        idler_position=(0.0, 0.0), oversample: int = 1) -> FarFieldMap:
    """Coincidence rate density versus signal position, with the idler held fixed.

    The map is normalised to unit total (sum * pitch^2 == 1). Its pitch is
    computed at twice the pump wavelength and its centre sits at
    ``-idler_position`` (momentum anti-correlation of the pair).
    """
    pump_ff = far_field(effective, f, oversample)
    pair_wavelength = 2 * effective.wavelength
    pitch = 2 * pump_ff.pitch
    half = pitch * (pump_ff.n // 2)
    ix, iy = idler_position
    if abs(ix) >= half or abs(iy) >= half:
        raise GridRangeError(
            f"idler position {idler_position} outside the computed plane (+-{half:g} m)")
    # Parseval: sum(I_pump) pitch_pump^2 == field power, and pitch = 2 pitch_pump
    intensity = pump_ff.intensity / (4.0 * effective.power)
    return FarFieldMap(intensity, pitch, f, pair_wavelength, (-ix, -iy),
                       meta={"idler_position": [ix, iy], "pair_wavelength": pair_wavelength})


def singles_envelope(config: SpdcConfig, slm1_transmission: float, like: FarFieldMap) -> FarFieldMap:
    """Singles rate map (counts/s) on the grid of ``like``.

    A broad Gaussian fixed by the source, scaled only by the pump transmission
    of the control modulator; it never depends on control or screen phases.
    """
    if not 0 < slm1_transmission <= 1:
        raise DomainError("transmission must lie in (0, 1]")
    xs = like.axis("x") - like.origin[0]
    ys = like.axis("y") - like.origin[1]
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    env = config.singles_peak_rate * np.exp(-2 * (xx**2 + yy**2) / config.singles_width**2)
    return replace(like, intensity=slm1_transmission * env,
                   meta={"kind": "singles", "slm1_transmission": slm1_transmission})


def singles_width_for(peak: float, edge: float, half_diagonal: float) -> float:
    """Gaussian width that drops from ``peak`` to ``edge`` at ``half_diagonal``."""
    return half_diagonal * np.sqrt(2 / np.log(peak / edge))
