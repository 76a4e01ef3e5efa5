"""
Partitioning wavefront optimisation over a segmented control phase.

Each iteration picks a random half of the segments, steps their phase through
``n_phases`` evenly spaced offsets, fits ``A + B cos(theta - theta*)`` to the
feedback via the first discrete Fourier harmonic and keeps ``theta*``.

Feedback is evaluated through :class:`SegmentedProbe`, which expresses the
far-field amplitude at the few detector-relevant pixels as an affine function
of the segment phasors. That is exact for a segmented phase-only modulator and
makes every probe a small matrix product instead of a full-grid FFT.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import sparse

from .errors import DomainError
from .field_optics import ComplexField, far_field_pitch
from .metrics import TargetMask
from .turbulence import PhaseScreen

FEEDBACK_MODES = ("pump_noiseless", "pump_camera", "coincidence_counts")
OVERLAY_MODES = ("pi_step_horizontal", "pi_step_vertical")
DEGENERATE_RATIO = 1e-12


@dataclass(frozen=True)
class SegmentTiling:
    """Assignment of grid samples to S x S square macro-pixels.

    ``index`` holds the flat segment number of every sample, -1 outside the
    segmented square.
    """

    index: np.ndarray
    segments: int
    start: int
    size: int
    dx: float

    @property
    def n(self) -> int:
        return self.index.shape[0]

    @property
    def count(self) -> int:
        return self.segments**2

    @property
    def segment_pitch(self) -> float:
        return self.size * self.dx / self.segments


def segment_tiling(n: int, dx: float, segments: int, aperture: float) -> SegmentTiling:
    """Tile a centred square of side ``aperture`` with ``segments`` x ``segments`` cells."""
    if segments < 1:
        raise DomainError("need at least one segment")
    size = int(round(aperture / dx))
    size -= size % 2
    size = min(size, n)
    if size < segments:
        raise DomainError(f"aperture of {size} samples cannot hold {segments} segments per side")
    start = n // 2 - size // 2
    cell = np.arange(size) * segments // size
    index = np.full((n, n), -1, dtype=np.int64)
    index[start:start + size, start:start + size] = cell[:, None] * segments + cell[None, :]
    return SegmentTiling(index, segments, start, size, dx)


class TraceEntry(NamedTuple):
    measurement: int
    iteration: int
    probe_phase: float
    value: float


@dataclass
class ControlState:
    """Segment phases (radians, unwrapped) plus optimisation bookkeeping.

    ``trace`` only ever grows: partition iterations append to it in place.
    """

    segments: np.ndarray
    tiling: SegmentTiling
    iteration: int = 0
    trace: list = field(default_factory=list)

    @classmethod
    def flat(cls, tiling: SegmentTiling) -> "ControlState":
        return cls(np.zeros((tiling.segments, tiling.segments)), tiling)

    @property
    def measurements(self) -> int:
        return len(self.trace)

    def phase_map(self, segments=None) -> np.ndarray:
        seg = self.segments if segments is None else segments
        out = np.zeros(self.tiling.index.shape)
        inside = self.tiling.index >= 0
        out[inside] = np.ravel(seg)[self.tiling.index[inside]]
        return out

    def phase_screen(self) -> PhaseScreen:
        return PhaseScreen(self.phase_map(), self.tiling.dx)

    def copy(self) -> "ControlState":
        return ControlState(self.segments.copy(), self.tiling, self.iteration, list(self.trace))


@dataclass(frozen=True)
class FeedbackSpec:
    mode: str
    target: TargetMask | None = None
    exposure: float | None = None

    def __post_init__(self):
        if self.mode not in FEEDBACK_MODES:
            raise DomainError(f"unknown feedback mode {self.mode!r}; choose from {FEEDBACK_MODES}")
        if self.mode == "coincidence_counts" and not (self.exposure and self.exposure > 0):
            raise DomainError("coincidence feedback needs a positive exposure per probe")

    @property
    def noiseless(self) -> bool:
        return self.mode == "pump_noiseless"


class SegmentedProbe:
    """Far-field amplitudes at selected pixels as ``t0 + T @ exp(i psi)``.

    Parameters
    ----------
    static_field : ComplexField
        Everything except the control phase (beam times screen transmission).
    tiling : SegmentTiling
    pixels : array of (row, col)
        Pixels of the centred, ``oversample``-padded far-field grid.
    f : float
        Focal length; with the wavelength it fixes the intensity units so
        that results agree with :func:`field_optics.far_field`.
    """

    def __init__(self, static_field: ComplexField, tiling: SegmentTiling, pixels, f: float,
                 oversample: int = 1):
        n = static_field.n
        if tiling.n != n:
            raise DomainError("tiling and field grids differ")
        m = n * oversample
        pixels = np.atleast_2d(np.asarray(pixels, dtype=np.int64))
        self.pixels = pixels
        pitch = far_field_pitch(n, static_field.dx, static_field.wavelength, f, oversample)
        self.unit = static_field.dx / (m * pitch)
        pos = np.arange(n) - n // 2
        ey = np.exp(-2j * np.pi * np.outer(pixels[:, 0] - m // 2, pos) / m)
        ex = np.exp(-2j * np.pi * np.outer(pixels[:, 1] - m // 2, pos) / m)
        amp = static_field.amplitude
        total = np.sum((ey @ amp) * ex, axis=1)
        # segments are rectangular blocks: one matrix product per block row
        a, size, s = tiling.start, tiling.size, tiling.segments
        cuts = np.searchsorted(np.arange(size) * s // size, np.arange(s))
        sq = slice(a, a + size)
        t = np.empty((len(pixels), s, s), dtype=complex)
        for r in range(s):
            rows = slice(a + cuts[r], a + (cuts[r + 1] if r + 1 < s else size))
            g = (ey[:, rows] @ amp[rows, sq]) * ex[:, sq]
            t[:, r, :] = np.add.reduceat(g, cuts, axis=1)
        t = t.reshape(len(pixels), -1)
        outside = total - t.sum(axis=1) if size < n else np.zeros(len(pixels), complex)
        self.t0 = outside * self.unit
        self.matrix = t.T * self.unit

    def amplitudes(self, segments) -> np.ndarray:
        return self.t0 + np.exp(1j * np.ravel(segments)) @ self.matrix

    def intensities(self, segments) -> np.ndarray:
        return np.abs(self.amplitudes(segments)) ** 2


class Feedback:
    """Scalar feedback: summed detector readings over a target, optionally noisy.

    Reading ``r`` is ``gain * exposure * (W @ I + background)``; the returned
    value is the sum over readings, Poisson sampled when ``noisy``.
    """

    def __init__(self, probe: SegmentedProbe, readout: sparse.spmatrix, mode: str,
                 exposure: float = 1.0, gain: float = 1.0, background: float = 0.0,
                 noisy: bool = False, rng=None, baseline: float | None = None):
        self.probe = probe
        self.readout = sparse.csr_matrix(readout)
        self.mode = mode
        self.exposure = exposure
        self.gain = gain
        self.background = background
        self.noisy = noisy
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.baseline = baseline
        self.evaluations = 0

    @property
    def noiseless(self) -> bool:
        return not self.noisy

    def expected(self, segments) -> float:
        readings = self.readout @ self.probe.intensities(segments)
        return float(np.sum(self.gain * self.exposure * (readings + self.background)))

    def __call__(self, segments) -> float:
        self.evaluations += 1
        readings = self.gain * self.exposure * (
            self.readout @ self.probe.intensities(segments) + self.background)
        if self.noisy:
            return float(self.rng.poisson(readings).sum())
        return float(readings.sum())


def probe_phases(n_phases: int) -> np.ndarray:
    if n_phases < 3:
        raise DomainError("need at least three test phases")
    return 2 * np.pi * np.arange(n_phases) / n_phases


def fit_phase(thetas, values) -> tuple[float, float, float]:
    """First-harmonic fit of ``A + B cos(theta - theta*)`` to evenly spaced samples.

    Returns ``(A, B, theta*)`` with ``B >= 0``; ``theta*`` is 0 when the
    modulation is degenerate (``B < 1e-12 A`` or all samples zero).
    """
    thetas = np.asarray(thetas, dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(values)
    a = values.mean()
    z = np.sum(values * np.exp(1j * thetas))
    b = 2 * np.abs(z) / n
    if not np.any(values) or b < DEGENERATE_RATIO * abs(a):
        return float(a), float(b), 0.0
    return float(a), float(b), float(np.angle(z))


def partition_iteration(state: ControlState, feedback: Callable, n_phases: int = 5,
                        rng=None) -> ControlState:
    """One partitioning step; updates ``state`` in place and returns it."""
    rng = np.random.default_rng() if rng is None else rng
    thetas = probe_phases(n_phases)
    base = state.segments.ravel().copy()
    selected = rng.permutation(base.size)[: base.size // 2]
    strict = getattr(feedback, "noiseless", False)
    values = np.empty(n_phases)
    for j, theta in enumerate(thetas):
        trial = base.copy()
        trial[selected] += theta
        v = feedback(trial)
        if strict and v < 0:
            raise DomainError(f"noiseless feedback returned a negative intensity ({v})")
        values[j] = v
        state.trace.append(TraceEntry(len(state.trace), state.iteration, float(theta), float(v)))
    _, _, best = fit_phase(thetas, values)
    base[selected] += best
    state.segments = base.reshape(state.segments.shape)
    state.iteration += 1
    return state


def run_optimization(state: ControlState, feedback: Callable, budget: int,
                     target_enhancement: float | None = None, n_phases: int = 5,
                     rng=None) -> tuple[ControlState, list]:
    """Iterate partitioning until ``budget`` measurements are used or the target is met.

    The target is checked against ``feedback.baseline`` with the mean probe
    value of the latest iteration.
    """
    if budget <= 0:
        raise DomainError("measurement budget must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    baseline = getattr(feedback, "baseline", None)
    used = 0
    while used + n_phases <= budget:
        partition_iteration(state, feedback, n_phases, rng)
        used += n_phases
        if target_enhancement is not None and baseline:
            recent = np.mean([e.value for e in state.trace[-n_phases:]])
            if recent / baseline >= target_enhancement:
                break
    return state, state.trace


def add_mode_overlay(state: ControlState, mode: str) -> ControlState:
    """Add pi to the segments on one half of the aperture (returns a new state).

    ``pi_step_vertical`` steps across a vertical line (left/right lobes),
    ``pi_step_horizontal`` across a horizontal one.
    """
    if mode not in OVERLAY_MODES:
        raise DomainError(f"unknown overlay {mode!r}; choose from {OVERLAY_MODES}")
    s = state.tiling.segments
    half = np.arange(s) >= s / 2
    step = np.where(half[None, :], np.pi, 0.0) if mode == "pi_step_vertical" \
        else np.where(half[:, None], np.pi, 0.0)
    out = state.copy()
    out.segments = state.segments + np.broadcast_to(step, state.segments.shape)
    return out


def trace_rows(trace) -> list[tuple]:
    return [tuple(e) for e in trace]
