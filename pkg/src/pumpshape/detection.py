"""
Noisy measurement records: fibre-scanned coincidences and camera frames.

Both detectors are linear in the far-field intensity. Each reading integrates
the (bilinearly interpolated) pattern over a collection area sampled on a fixed
sub-pixel lattice, which makes the readings exactly monotone in the area.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import sparse

from .errors import DomainError, GridRangeError, StateError
from .field_optics import FarFieldMap

LATTICE_DIVISIONS = 3


@dataclass(frozen=True)
class DetectionConfig:
    """Detector geometry, exposures and noise settings (SI units).

    Defaults follow the lab setup: 25 um scan steps with 50 um fibres, 4.8 um
    camera pixels at 200 us frames, 0.14 counts/s of accidentals.
    """

    scan_step: float = 25e-6
    collection_diameter: float = 50e-6
    exposure_per_point: float = 10.0
    accidental_rate: float = 0.14
    camera_pixel: float = 4.8e-6
    camera_exposure: float = 200e-6
    camera_gain: float = 1.0
    coincidence_window: float = 4e-9
    scan_points: int = 41
    camera_points: int = 128
    shot_noise: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("scan_step", "collection_diameter", "camera_pixel", "camera_gain",
                     "coincidence_window"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        for name in ("exposure_per_point", "accidental_rate", "camera_exposure"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")
        if self.scan_points < 1 or self.camera_points < 1:
            raise DomainError("scan and camera grids need at least one point")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CountMap:
    """Counts on a detector grid; ``x``/``y`` are the column/row coordinates (m)."""

    counts: np.ndarray
    x: np.ndarray
    y: np.ndarray
    exposure: float
    corrected: bool = False
    seed: int | None = None
    kind: str = "coincidence"
    meta: dict = field(default_factory=dict)

    @property
    def rates(self) -> np.ndarray:
        if self.exposure <= 0:
            raise DomainError("rates undefined for zero exposure")
        return self.counts / self.exposure

    @property
    def pitch(self) -> float:
        return float(self.x[1] - self.x[0]) if len(self.x) > 1 else 0.0


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def _lattice(h: float, half_extent: float) -> np.ndarray:
    m = int(np.floor(half_extent / h + 1e-9))
    return np.arange(-m, m + 1) * h


def aperture_offsets(diameter: float, h: float) -> np.ndarray:
    """Lattice points (spacing h) inside a disk of ``diameter``; shape (K, 2)."""
    t = _lattice(h, diameter / 2)
    xx, yy = np.meshgrid(t, t)
    inside = xx**2 + yy**2 <= (diameter / 2) ** 2 + 1e-30
    return np.column_stack([xx[inside], yy[inside]])


def pixel_offsets(pixel: float, pitch: float) -> np.ndarray:
    """Sub-pixel sample offsets for a square pixel, at least two per pattern pitch."""
    s = max(1, int(np.ceil(2 * pixel / pitch)))
    t = (np.arange(s) + 0.5) / s * pixel - pixel / 2
    xx, yy = np.meshgrid(t, t)
    return np.column_stack([xx.ravel(), yy.ravel()])


def grid_axis(n: int, step: float, center: float = 0.0) -> np.ndarray:
    return center + (np.arange(n) - n // 2) * step


def sampling_matrix(ffm: FarFieldMap, points: np.ndarray, offsets: np.ndarray,
                    weight: float) -> sparse.csr_matrix:
    """Sparse map from the flattened pattern to readings.

    Reading ``m`` is ``weight * sum_k I(points[m] + offsets[k])`` with I
    interpolated bilinearly.
    """
    n_rows, n_cols = ffm.intensity.shape
    px = (points[:, None, 0] + offsets[None, :, 0]).ravel()
    py = (points[:, None, 1] + offsets[None, :, 1]).ravel()
    fc = (px - ffm.origin[0]) / ffm.pitch + n_cols // 2
    fr = (py - ffm.origin[1]) / ffm.pitch + n_rows // 2
    if fc.min() < 0 or fr.min() < 0 or fc.max() > n_cols - 1 or fr.max() > n_rows - 1:
        raise GridRangeError("detector samples fall outside the computed pattern")
    c0 = np.minimum(np.floor(fc).astype(np.int64), n_cols - 2)
    r0 = np.minimum(np.floor(fr).astype(np.int64), n_rows - 2)
    tc, tr = fc - c0, fr - r0
    reading = np.repeat(np.arange(len(points)), len(offsets))
    rows = np.concatenate([reading] * 4)
    cols = np.concatenate([r0 * n_cols + c0, r0 * n_cols + c0 + 1,
                           (r0 + 1) * n_cols + c0, (r0 + 1) * n_cols + c0 + 1])
    vals = weight * np.concatenate([(1 - tr) * (1 - tc), (1 - tr) * tc, tr * (1 - tc), tr * tc])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(len(points), n_rows * n_cols))


@dataclass(frozen=True)
class DetectorGeometry:
    x: np.ndarray
    y: np.ndarray
    matrix: sparse.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.y), len(self.x)

    def read(self, intensity: np.ndarray) -> np.ndarray:
        return (self.matrix @ intensity.ravel()).reshape(self.shape)


def scan_geometry(ffm: FarFieldMap, cfg: DetectionConfig, center=None) -> DetectorGeometry:
    """Fibre scan grid centred on ``center`` (default: the pattern centre)."""
    cx, cy = ffm.origin if center is None else center
    x = grid_axis(cfg.scan_points, cfg.scan_step, cx)
    y = grid_axis(cfg.scan_points, cfg.scan_step, cy)
    yy, xx = np.meshgrid(y, x, indexing="ij")
    h = ffm.pitch / LATTICE_DIVISIONS
    offs = aperture_offsets(cfg.collection_diameter, h)
    mat = sampling_matrix(ffm, np.column_stack([xx.ravel(), yy.ravel()]), offs, h * h)
    return DetectorGeometry(x, y, mat)


def camera_geometry(ffm: FarFieldMap, cfg: DetectionConfig, center=None) -> DetectorGeometry:
    cx, cy = ffm.origin if center is None else center
    x = grid_axis(cfg.camera_points, cfg.camera_pixel, cx)
    y = grid_axis(cfg.camera_points, cfg.camera_pixel, cy)
    yy, xx = np.meshgrid(y, x, indexing="ij")
    offs = pixel_offsets(cfg.camera_pixel, ffm.pitch)
    mat = sampling_matrix(ffm, np.column_stack([xx.ravel(), yy.ravel()]), offs,
                          cfg.camera_pixel**2 / len(offs))
    return DetectorGeometry(x, y, mat)


# ---------------------------------------------------------------------------
# measurements
# ---------------------------------------------------------------------------

def expected_coincidences(rate_density: FarFieldMap, cfg: DetectionConfig,
                          geometry: DetectorGeometry | None = None) -> np.ndarray:
    """Mean counts per scan point: (aperture integral + accidentals) * exposure."""
    geometry = geometry or scan_geometry(rate_density, cfg)
    return (geometry.read(rate_density.intensity) + cfg.accidental_rate) * cfg.exposure_per_point


def scan_coincidences(rate_density: FarFieldMap, cfg: DetectionConfig,
                      geometry: DetectorGeometry | None = None, rng=None) -> CountMap:
    """Poisson-sampled fibre scan of a coincidence rate density (counts/s/m^2)."""
    geometry = geometry or scan_geometry(rate_density, cfg)
    mean = expected_coincidences(rate_density, cfg, geometry)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    counts = rng.poisson(mean)
    return CountMap(counts, geometry.x, geometry.y, cfg.exposure_per_point, False, cfg.seed,
                    "coincidence", {"accidental_rate": cfg.accidental_rate})


def subtract_accidentals(cmap: CountMap, cfg: DetectionConfig) -> CountMap:
    """Remove the flat accidental background (rate * exposure) from every point."""
    if cmap.corrected:
        raise StateError("accidentals were already subtracted from this map")
    counts = cmap.counts - cfg.accidental_rate * cmap.exposure
    return replace(cmap, counts=counts, corrected=True,
                   meta={**cmap.meta, "accidental_rate": cfg.accidental_rate})


def camera_capture(pattern: FarFieldMap, cfg: DetectionConfig, shot_noise: bool | None = None,
                   geometry: DetectorGeometry | None = None, rng=None) -> CountMap:
    """One camera frame: pixel-integrated intensity * gain * exposure, Poisson if noisy."""
    geometry = geometry or camera_geometry(pattern, cfg)
    mean = geometry.read(pattern.intensity) * cfg.camera_gain * cfg.camera_exposure
    noisy = cfg.shot_noise if shot_noise is None else shot_noise
    if noisy:
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        counts = rng.poisson(mean)
    else:
        counts = mean
    return CountMap(counts, geometry.x, geometry.y, cfg.camera_exposure, False, cfg.seed,
                    "camera", {"shot_noise": bool(noisy), "gain": cfg.camera_gain})


def speckle_grain_area_pixels(wavelength: float, f: float, beam_waist: float,
                              pixel: float) -> float:
    """Area (in pixels) of a far-field speckle grain, pi (lambda f / (pi w))^2 / pixel^2."""
    grain = wavelength * f / (np.pi * beam_waist)
    return float(np.pi * grain**2 / pixel**2)


def write_countmap_csv(cmap: CountMap, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "x", "y", "counts"])
        for i, yv in enumerate(cmap.y):
            for j, xv in enumerate(cmap.x):
                w.writerow([i, j, repr(float(xv)), repr(float(yv)), repr(float(cmap.counts[i, j]))
                            if cmap.corrected or cmap.counts.dtype.kind == "f"
                            else int(cmap.counts[i, j])])
