"""
Von Karman phase screens for emulating a turbulent free-space link.

Screens are synthesised with the inverse-Fourier-transform method: the square
root of the phase PSD, sampled on the discrete frequency grid of the screen,
weights a circular Gaussian random matrix whose inverse DFT (real part) is the
phase. Everything is SI internally (metres, radians, rad/m).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .errors import DomainError, GridRangeError, ShapeError

logger = logging.getLogger(__name__)

KOLMOGOROV_PSD_COEFF = 0.49
KOLMOGOROV_SF_COEFF = 6.88
FRIED_COEFF = 0.4229
INNER_SCALE_COEFF = 5.92


def _require_positive(**values):
    for name, v in values.items():
        if not np.all(np.asarray(v) > 0):
            raise DomainError(f"{name} must be strictly positive, got {v!r}")


@dataclass(frozen=True)
class TurbulenceParams:
    """Physical description of the turbulent link.

    ``scale`` shrinks every transverse length of the emulated screen
    (r0, outer and inner scale) relative to the physical link, so that a
    millimetre lab beam scatters like a metre-size beam in the field.
    ``scale=1e-3`` with the field values gives the lab parameters
    r0 = 0.14 mm, l_o = 10 mm, l_i = 5 um.
    """

    cn2: float
    z: float
    wavelength: float
    outer_scale: float
    inner_scale: float
    scale: float = 1.0

    def __post_init__(self):
        _require_positive(cn2=self.cn2, z=self.z, wavelength=self.wavelength,
                          outer_scale=self.outer_scale,
                          inner_scale=self.inner_scale, scale=self.scale)
        if not self.inner_scale < self.outer_scale:
            raise DomainError("inner scale must be smaller than the outer scale")
        if not self.k_o < self.k_m:
            raise DomainError("outer-scale wavenumber must lie below the inner-scale cutoff")

    @property
    def l_o(self) -> float:
        """Outer scale of the emulated screen (m)."""
        return self.outer_scale * self.scale

    @property
    def l_i(self) -> float:
        return self.inner_scale * self.scale

    @property
    def k_o(self) -> float:
        return 2 * np.pi / self.l_o

    @property
    def k_m(self) -> float:
        return INNER_SCALE_COEFF / self.l_i

    @property
    def r0(self) -> float:
        """Fried parameter of the emulated screen at ``wavelength``."""
        return fried_parameter(self.wavelength, self.cn2, self.z) * self.scale

    def r0_at(self, wavelength: float) -> float:
        return fried_parameter(wavelength, self.cn2, self.z) * self.scale

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ScreenRecipe:
    params: TurbulenceParams
    n: int
    dx: float
    seed: int
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class PhaseScreen:
    """Unwrapped phase (pump-wavelength radians) on an n x n grid of pitch dx."""

    phase: np.ndarray
    dx: float
    recipe: ScreenRecipe | None = None

    def __post_init__(self):
        p = self.phase
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ShapeError(f"phase screen must be square, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise DomainError("phase screen contains non-finite values")

    @property
    def n(self) -> int:
        return self.phase.shape[0]

    def wrapped(self) -> np.ndarray:
        """The phase as displayed on a modulator, in [0, 2*pi)."""
        return np.mod(self.phase, 2 * np.pi)

    @classmethod
    def zeros(cls, n: int, dx: float) -> "PhaseScreen":
        return cls(np.zeros((n, n)), dx)


# ---------------------------------------------------------------------------
# Closed-form atmosphere relations
# ---------------------------------------------------------------------------

def fried_parameter(wavelength: float, cn2: float, z: float) -> float:
    """Fried parameter r0 = (0.4229 k^2 z Cn^2)^(-3/5), k = 2 pi / wavelength."""
    _require_positive(wavelength=wavelength, cn2=cn2, z=z)
    k = 2 * np.pi / wavelength
    return float((FRIED_COEFF * k**2 * z * cn2) ** (-3 / 5))


def von_karman_psd(kx, ky, r0: float, l_o: float, l_i: float):
    """Two-dimensional phase PSD of a von Karman screen (rad^2 m^2).

    Parameters
    ----------
    kx, ky : array_like
        Angular spatial frequencies in rad/m.
    r0 : float
        Fried parameter (m).
    l_o, l_i : float
        Outer and inner scale (m); k_o = 2 pi / l_o, k_m = 5.92 / l_i.
    """
    _require_positive(r0=r0, l_o=l_o, l_i=l_i)
    k_o = 2 * np.pi / l_o
    k_m = INNER_SCALE_COEFF / l_i
    k2 = np.asarray(kx, dtype=float) ** 2 + np.asarray(ky, dtype=float) ** 2
    return (KOLMOGOROV_PSD_COEFF * r0 ** (-5 / 3)
            * (k2 + k_o**2) ** (-11 / 6) * np.exp(-k2 / k_m**2))


def kolmogorov_structure_function(r, r0: float):
    """D(r) = 6.88 (r / r0)^(5/3)."""
    return KOLMOGOROV_SF_COEFF * (np.asarray(r, dtype=float) / r0) ** (5 / 3)


def air_refractive_index(pressure: float, temperature: float, wavelength_um: float) -> float:
    """Refractive index of air; pressure in mbar, temperature in K, wavelength in um."""
    _require_positive(pressure=pressure, temperature=temperature,
                      wavelength_um=wavelength_um)
    return 1 + 77.6 * (1 + 7.52e-3 * wavelength_um**-2) * (pressure / temperature) * 1e-6


def isoplanatic_bound(r0: float, wavelength: float) -> tuple[float, float]:
    """Coherence radius rho0 = r0 / 2.1 and the correctable link length rho0^2 / lambda."""
    _require_positive(r0=r0, wavelength=wavelength)
    rho0 = r0 / 2.1
    return rho0, rho0**2 / wavelength


# ---------------------------------------------------------------------------
# Screen synthesis
# ---------------------------------------------------------------------------

def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def frequency_grid(n: int, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Angular frequencies (rad/m) of an n x n DFT grid in numpy's FFT order."""
    k = 2 * np.pi * np.fft.fftfreq(n, d=dx)
    ky, kx = np.meshgrid(k, k, indexing="ij")
    return kx, ky


def sampled_psd(params: TurbulenceParams, n: int, dx: float) -> np.ndarray:
    """PSD sampled on the FFT grid, piston sample zeroed."""
    kx, ky = frequency_grid(n, dx)
    psd = von_karman_psd(kx, ky, params.r0, params.l_o, params.l_i)
    psd[0, 0] = 0.0
    return psd


def screen_warnings(params: TurbulenceParams, n: int, dx: float) -> tuple[str, ...]:
    flags = []
    if dx > params.l_i:
        flags.append("inner_scale_unresolved")
    if n * dx < 4 * params.r0:
        flags.append("grid_smaller_than_4_r0")
    if n * dx < params.l_o:
        flags.append("outer_scale_exceeds_grid")
    return tuple(flags)


def spectral_coefficients(params: TurbulenceParams, n: int, dx: float, seed: int) -> np.ndarray:
    """Random spectral samples sqrt(PSD dk^2) (A + iB)/sqrt(2) in FFT order.

    A and B are drawn, in that order, from ``numpy.random.default_rng(seed)``.
    """
    if not _is_power_of_two(n):
        raise DomainError(f"grid size must be a power of two, got {n}")
    _require_positive(dx=dx)
    dk = 2 * np.pi / (n * dx)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    b = rng.standard_normal((n, n))
    return np.sqrt(sampled_psd(params, n, dx) * dk**2) * (a + 1j * b) / np.sqrt(2)


# Taking the real part keeps half of the variance carried by the complex
# samples; sqrt(2) restores D(r) = 2 * sum(PSD dk^2 (1 - cos k.r)).
REAL_PART_GAIN = np.sqrt(2.0)


def generate_screen(params: TurbulenceParams, n: int, dx: float, seed: int) -> PhaseScreen:
    """Synthesise a von Karman phase screen.

    The result is a pure function of ``(params, n, dx, seed)``.
    """
    coeffs = spectral_coefficients(params, n, dx, seed)
    # unnormalised inverse sum: sum_k c_k exp(+i k.x)
    phase = REAL_PART_GAIN * np.real(np.fft.ifft2(coeffs)) * n * n
    flags = screen_warnings(params, n, dx)
    for flag in flags:
        logger.info("screen recipe flag: %s (n=%d, dx=%g)", flag, n, dx)
    return PhaseScreen(phase, dx, ScreenRecipe(params, n, dx, int(seed), flags))


def expected_structure_function(params: TurbulenceParams, n: int, dx: float, lags) -> np.ndarray:
    """Ensemble D(r) of generated screens along one grid axis, for integer lags.

    This is the exact expectation for the sampled spectrum (finite grid, no
    piston), not the continuum formula.
    """
    kx, _ = frequency_grid(n, dx)
    weight = sampled_psd(params, n, dx) * (2 * np.pi / (n * dx)) ** 2
    lags = np.atleast_1d(np.asarray(lags, dtype=float))
    return np.array([2 * np.sum(weight * (1 - np.cos(kx * m * dx))) for m in lags])


def von_karman_structure_function(r, params: TurbulenceParams) -> np.ndarray:
    """Continuum D(r) = 4 pi int PSD(k) (1 - J0(k r)) k dk of the von Karman screen."""
    r0, k_o, k_m = params.r0, params.k_o, params.k_m
    out = []
    for rr in np.atleast_1d(np.asarray(r, dtype=float)):
        def integrand(k):
            k2 = k * k
            return (k2 + k_o**2) ** (-11 / 6) * np.exp(-k2 / k_m**2) * (1 - special.j0(k * rr)) * k
        # log-spaced pieces from well below 1/r up to far past the cutoff k_m
        top = np.log10(20 * k_m * rr)
        edges = np.concatenate([[0.0], np.logspace(-3, top, int(20 * (top + 3)) + 2) / rr])
        total = sum(integrate.quad(integrand, lo, hi, limit=200)[0]
                    for lo, hi in zip(edges[:-1], edges[1:]))
        out.append(4 * np.pi * KOLMOGOROV_PSD_COEFF * r0 ** (-5 / 3) * total)
    return np.array(out)


# ---------------------------------------------------------------------------
# Frozen flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrozenFlow:
    """A large master screen viewed through a translating N x N window.

    ``schedule`` holds integer (row, col) offsets relative to ``origin``, the
    top-left corner of the initial window inside the master.
    """

    master: PhaseScreen
    window: int
    schedule: tuple[tuple[int, int], ...]
    origin: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if not self.window < self.master.n:
            raise DomainError("window must be smaller than the master screen")
        object.__setattr__(self, "schedule", tuple((int(r), int(c)) for r, c in self.schedule))
        for step in range(len(self.schedule)):
            self._corner(step)

    def _corner(self, step: int) -> tuple[int, int]:
        dr, dc = self.schedule[step]
        r, c = self.origin[0] + dr, self.origin[1] + dc
        if r < 0 or c < 0 or r + self.window > self.master.n or c + self.window > self.master.n:
            raise GridRangeError(
                f"window at offset {self.schedule[step]} leaves the {self.master.n}^2 master screen")
        return r, c

    def __len__(self) -> int:
        return len(self.schedule)


def linear_schedule(n_steps: int, step: tuple[int, int] = (0, 1)) -> tuple[tuple[int, int], ...]:
    """Constant-speed translation: offsets 0, step, 2*step, ..."""
    return tuple((i * step[0], i * step[1]) for i in range(n_steps))


def frozen_view(flow: FrozenFlow, step: int) -> PhaseScreen:
    """The window of the master screen at scheduled position ``step``."""
    if not 0 <= step < len(flow.schedule):
        raise GridRangeError(f"step {step} outside schedule of length {len(flow.schedule)}")
    r, c = flow._corner(step)
    n = flow.window
    return PhaseScreen(flow.master.phase[r:r + n, c:c + n].copy(), flow.master.dx,
                       flow.master.recipe)


def make_frozen_flow(params: TurbulenceParams, window: int, dx: float, seed: int,
                     schedule: Sequence[tuple[int, int]], origin=(0, 0)) -> FrozenFlow:
    """Generate the smallest power-of-two master screen that contains the schedule."""
    rows = [origin[0] + r for r, _ in schedule]
    cols = [origin[1] + c for _, c in schedule]
    span = max(max(rows) + window, max(cols) + window, window + 1)
    m = 1 << math.ceil(math.log2(span))
    master = generate_screen(params, m, dx, seed)
    return FrozenFlow(master, window, tuple(schedule), tuple(origin))
