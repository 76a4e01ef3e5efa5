"""
The simulated optical link: pump beam, control modulator, turbulence screen,
Fourier lens, camera and fibre-scanned coincidence detectors on one grid.

Rate normalisation
------------------
Pump far fields are scaled so the unscattered focus reads ``pump_peak_rate``
counts/s on the brightest camera pixel (unit gain). Coincidence patterns are
scaled so the unscattered focus reads ``spdc.peak_rate`` counts/s through the
collection fibre. Both references are taken without screen and without
control phase.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse

from .detection import (CountMap, DetectionConfig, DetectorGeometry, camera_capture,
                        camera_geometry, scan_coincidences, scan_geometry)
from .field_optics import ComplexField, FarFieldMap, apply_phase, far_field, gaussian_beam
from .errors import DomainError
from .shaper import Feedback, FeedbackSpec, SegmentedProbe, SegmentTiling
from .spdc import SpdcConfig, coincidence_pattern, effective_pair_field
from .turbulence import PhaseScreen


@dataclass(frozen=True)
class _Scales:
    pump: float
    coincidence: float


class OpticalLink:
    def __init__(self, n: int, dx: float, f: float, beam_waist: float, spdc: SpdcConfig,
                 detection: DetectionConfig, tiling: SegmentTiling,
                 atmosphere: PhaseScreen | None = None, oversample: int = 1,
                 pump_peak_rate: float = 1e8, _shared=None):
        self.n, self.dx, self.f = n, dx, f
        self.beam_waist = beam_waist
        self.spdc = spdc
        self.detection = detection
        self.tiling = tiling
        self.atmosphere = atmosphere
        self.oversample = oversample
        self.pump_peak_rate = pump_peak_rate
        self._shared = _shared if _shared is not None else {}

    def with_atmosphere(self, atmosphere: PhaseScreen | None) -> "OpticalLink":
        """Same optics and detectors, different screen (geometry caches are shared)."""
        return OpticalLink(self.n, self.dx, self.f, self.beam_waist, self.spdc, self.detection,
                           self.tiling, atmosphere, self.oversample, self.pump_peak_rate,
                           self._shared)

    def with_detection(self, detection: DetectionConfig) -> "OpticalLink":
        return OpticalLink(self.n, self.dx, self.f, self.beam_waist, self.spdc, detection,
                           self.tiling, self.atmosphere, self.oversample, self.pump_peak_rate)

    # -- fields -----------------------------------------------------------

    @property
    def pump0(self) -> ComplexField:
        if "pump0" not in self._shared:
            self._shared["pump0"] = gaussian_beam(self.beam_waist, self.n, self.dx,
                                                  self.spdc.pump_wavelength, plane="screen")
        return self._shared["pump0"]

    def _screen(self, with_screen: bool) -> PhaseScreen:
        if with_screen and self.atmosphere is not None:
            return self.atmosphere
        return PhaseScreen.zeros(self.n, self.dx)

    def pump_static(self, with_screen: bool = True) -> ComplexField:
        return apply_phase(self.pump0, self._screen(with_screen), 1.0)

    def pair_static(self, with_screen: bool = True) -> ComplexField:
        return apply_phase(self.pump0, self._screen(with_screen), self.spdc.beta)

    def pump_field(self, control: PhaseScreen | None = None, with_screen: bool = True) -> ComplexField:
        control = control if control is not None else PhaseScreen.zeros(self.n, self.dx)
        return apply_phase(apply_phase(self.pump0, control, 1.0), self._screen(with_screen), 1.0)

    def pair_field(self, control: PhaseScreen | None = None, with_screen: bool = True,
                   beta: float | None = None) -> ComplexField:
        control = control if control is not None else PhaseScreen.zeros(self.n, self.dx)
        beta = self.spdc.beta if beta is None else beta
        return effective_pair_field(self.pump0, control, self._screen(with_screen), beta)

    # -- patterns ---------------------------------------------------------

    def _raw_pump(self, fld: ComplexField) -> FarFieldMap:
        return far_field(fld, self.f, self.oversample)

    def _raw_coincidence(self, fld: ComplexField) -> FarFieldMap:
        return coincidence_pattern(fld, self.f, self.spdc.idler_position, self.oversample)

    @property
    def camera(self) -> DetectorGeometry:
        key = ("camera", self.detection.camera_points, self.detection.camera_pixel)
        if key not in self._shared:
            self._shared[key] = camera_geometry(self._raw_pump(self.pump0), self.detection)
        return self._shared[key]

    @property
    def scan(self) -> DetectorGeometry:
        key = ("scan", self.detection.scan_points, self.detection.scan_step,
               self.detection.collection_diameter)
        if key not in self._shared:
            self._shared[key] = scan_geometry(self._raw_coincidence(self.pump0), self.detection)
        return self._shared[key]

    @property
    def scales(self) -> _Scales:
        if "scales" not in self._shared:
            pump_ref = self.camera.read(self._raw_pump(self.pump0).intensity).max()
            pair_ref = self.scan.read(self._raw_coincidence(self.pump0).intensity).max()
            self._shared["scales"] = _Scales(
                self.pump_peak_rate / (pump_ref * self.detection.camera_gain),
                self.spdc.peak_rate / pair_ref)
        return self._shared["scales"]

    def pump_pattern(self, control: PhaseScreen | None = None, with_screen: bool = True) -> FarFieldMap:
        raw = self._raw_pump(self.pump_field(control, with_screen))
        return raw.with_intensity(raw.intensity * self.scales.pump)

    def coincidence_density(self, control: PhaseScreen | None = None, with_screen: bool = True,
                            beta: float | None = None) -> FarFieldMap:
        """Coincidence rate density (counts/s/m^2) in signal-detector coordinates."""
        raw = self._raw_coincidence(self.pair_field(control, with_screen, beta))
        return raw.with_intensity(raw.intensity * self.scales.coincidence)

    # -- measurements -----------------------------------------------------

    def capture_pump(self, control=None, with_screen=True, shot_noise=None, rng=None) -> CountMap:
        return camera_capture(self.pump_pattern(control, with_screen), self.detection, shot_noise,
                              self.camera, rng)

    def scan_pairs(self, control=None, with_screen=True, exposure=None, rng=None) -> CountMap:
        cfg = self.detection if exposure is None else replace(self.detection,
                                                               exposure_per_point=exposure)
        return scan_coincidences(self.coincidence_density(control, with_screen), cfg, self.scan,
                                 rng)

    # -- feedback ---------------------------------------------------------

    def feedback(self, spec: FeedbackSpec, rng=None) -> Feedback:
        """Build the scalar feedback for ``spec`` against the current screen."""
        if spec.target is None:
            raise DomainError("feedback needs a target mask")
        pump = spec.mode.startswith("pump")
        geometry = self.camera if pump else self.scan
        rows = np.flatnonzero(spec.target.mask.ravel())
        readout = geometry.matrix[rows]
        cols = np.unique(readout.indices)
        readout = readout[:, cols]
        m = self.n * self.oversample
        pixels = np.column_stack(np.divmod(cols, m))
        if pump:
            static = self.pump_static()
            scale = self.scales.pump
            fb = dict(exposure=self.detection.camera_exposure, gain=self.detection.camera_gain,
                      background=0.0, noisy=spec.mode == "pump_camera")
        else:
            static = self.pair_static()
            scale = self.scales.coincidence / (4.0 * self.pump0.power)
            fb = dict(exposure=spec.exposure, gain=1.0,
                      background=self.detection.accidental_rate, noisy=True)
        probe = SegmentedProbe(static, self.tiling, pixels, self.f, self.oversample)
        feedback = Feedback(probe, sparse.csr_matrix(readout * scale), spec.mode, rng=rng, **fb)
        feedback.baseline = feedback.expected(np.zeros(self.tiling.count))
        return feedback
