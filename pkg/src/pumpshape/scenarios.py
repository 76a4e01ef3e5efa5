"""
Named, seeded scenarios that reproduce the lab experiments end to end.

A scenario is a pure function of its :class:`ScenarioConfig`. Every run
writes ``manifest.json`` (resolved configuration and derived quantities) and
``metrics.json`` (sorted keys, so reruns are byte-identical) plus its grids,
count maps and traces.

Random streams
--------------
The master seed ``s`` drives three independent streams: the turbulence screen
uses ``s`` itself, detector noise uses ``default_rng([s, 1])`` and the
optimiser uses ``default_rng([s, 2])``.
"""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import io
from .detection import (CountMap, DetectionConfig, speckle_grain_area_pixels,
                        subtract_accidentals)
from .errors import ConfigError, DomainError, GridRangeError
from .field_optics import FarFieldMap, far_field_pitch, rescale_pattern, resample_pattern
from .link import OpticalLink
from .metrics import (StructureFunctionAccumulator, efficiency, enhancement, pearson,
                      target_mask)
from .shaper import (OVERLAY_MODES, ControlState, FeedbackSpec, add_mode_overlay,
                     partition_iteration, run_optimization, segment_tiling)
from .spdc import SpdcConfig
from .turbulence import (TurbulenceParams, air_refractive_index, expected_structure_function,
                         frozen_view, generate_screen, isoplanatic_bound,
                         kolmogorov_structure_function, linear_schedule, make_frozen_flow,
                         screen_warnings, von_karman_structure_function)

logger = logging.getLogger(__name__)

SCENARIOS = ("screen-validate", "speckle", "optimize-static", "optimize-dynamic", "higher-mode")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSettings:
    n: int = 512
    dx: float = 12.5e-6
    oversample: int = 2


@dataclass(frozen=True)
class OpticsSettings:
    """Beam and lens settings.

    The screen-plane waist is the 1/e field radius of the pump on the
    turbulence modulator; the crystal waist is recorded for reference (the
    planes are imaged onto each other). ``window_factor`` sizes the detector
    windows in units of the speckle halo width lambda f / r0.
    """

    f: float = 0.3
    screen_waist: float = 1.4e-3
    crystal_waist: float = 0.7e-3
    control_waist: float = 1.4e-3
    pump_peak_rate: float = 1e8
    window_factor: float = 1.0
    aperture_factor: float = 3.0


@dataclass(frozen=True)
class ShaperSettings:
    segments: int = 30
    n_phases: int = 5
    budget: int = 15000
    feedback: str = "pump_noiseless"
    probe_exposure: float = 1.0
    target_enhancement: float | None = None


@dataclass(frozen=True)
class DynamicSettings:
    """Frozen-flow schedule: screen shifts by ``step`` samples per step.

    Optimisation runs ``iterations_per_shift`` partition iterations per step
    during the ``on`` phase only; ``dwell`` is the coincidence exposure per
    step (s).
    """

    pre_steps: int = 20
    on_steps: int = 100
    off_steps: int = 60
    iterations_per_shift: int = 10
    step: tuple[int, int] = (0, 1)
    feedback: str = "pump_camera"
    dwell: float = 150.0
    settle_fraction: float = 0.25


@dataclass(frozen=True)
class ValidationSettings:
    screens: int = 200
    n: int = 512
    r0_samples: float = 20.0
    min_lag: int = 4
    max_lag: int = 64
    tolerance: float = 0.15


@dataclass(frozen=True)
class SpeckleSettings:
    exposure: float = 30.0
    reference_exposure: float = 2.0
    before_exposure: float = 12.0


@dataclass(frozen=True)
class HigherModeSettings:
    overlay: str = "pi_step_vertical"


LAB_TURBULENCE = dict(cn2=1e-15, z=1000.0, wavelength=808e-9, outer_scale=10.0,
                      inner_scale=5e-3, scale=1e-3)

PRESETS = {
    "lab": {
        "turbulence": LAB_TURBULENCE,
        "grid": {"n": 512, "dx": 12.5e-6, "oversample": 2},
        "optics": {"f": 0.3, "screen_waist": 1.4e-3, "crystal_waist": 0.7e-3,
                   "control_waist": 1.4e-3},
    },
    # unscaled lengths: the same dimensionless experiment at 1000x size
    "field": {
        "turbulence": {**LAB_TURBULENCE, "scale": 1.0},
        "grid": {"n": 512, "dx": 12.5e-3, "oversample": 2},
        "optics": {"f": 300.0, "screen_waist": 1.4, "crystal_waist": 0.7,
                   "control_waist": 1.4},
    },
}

_SECTIONS = {
    "turbulence": TurbulenceParams, "grid": GridSettings, "optics": OpticsSettings,
    "spdc": SpdcConfig, "detection": DetectionConfig, "shaper": ShaperSettings,
    "dynamic": DynamicSettings, "validation": ValidationSettings,
    "speckle": SpeckleSettings, "higher_mode": HigherModeSettings,
}


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "optimize-static"
    preset: str = "lab"
    seed: int = 0
    turbulence: TurbulenceParams = field(default_factory=lambda: TurbulenceParams(**LAB_TURBULENCE))
    grid: GridSettings = field(default_factory=GridSettings)
    optics: OpticsSettings = field(default_factory=OpticsSettings)
    spdc: SpdcConfig = field(default_factory=SpdcConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    shaper: ShaperSettings = field(default_factory=ShaperSettings)
    dynamic: DynamicSettings = field(default_factory=DynamicSettings)
    validation: ValidationSettings = field(default_factory=ValidationSettings)
    speckle: SpeckleSettings = field(default_factory=SpeckleSettings)
    higher_mode: HigherModeSettings = field(default_factory=HigherModeSettings)
    export_pgm: bool = True

    def to_dict(self) -> dict:
        out = {"scenario": self.scenario, "preset": self.preset, "seed": self.seed,
               "export_pgm": self.export_pgm}
        for name in _SECTIONS:
            out[name] = asdict(getattr(self, name))
        return io._to_builtin(out)


def _build_section(name: str, cls, values: dict):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    values = dict(values)
    for key in ("idler_position", "step"):
        if key in values and values[key] is not None:
            values[key] = tuple(values[key])
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}' settings: {exc}") from exc


def _resolve_detection_windows(cfg: ScenarioConfig, raw: dict) -> DetectionConfig:
    """Fill scan/camera point counts that were left unset from the speckle halo size."""
    det = cfg.detection
    halo_pump = cfg.spdc.pump_wavelength * cfg.optics.f / cfg.turbulence.r0
    updates = {}
    if raw.get("camera_points") is None:
        updates["camera_points"] = _odd(cfg.optics.window_factor * halo_pump / det.camera_pixel)
    if raw.get("scan_points") is None:
        updates["scan_points"] = _odd(cfg.optics.window_factor * 2 * halo_pump / det.scan_step)
    return replace(det, **updates)


def _odd(x: float) -> int:
    k = int(math.ceil(x))
    return k + 1 - k % 2


def build_config(data: dict | None = None, preset: str | None = None,
                 seed: int | None = None) -> ScenarioConfig:
    """Resolve a JSON-like dict over a preset into a validated config."""
    data = copy.deepcopy(data or {})
    preset = preset or data.pop("preset", "lab")
    data.pop("preset", None)
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    top = {"scenario", "seed", "export_pgm", *_SECTIONS}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    scenario = data.get("scenario", "optimize-static")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {list(SCENARIOS)}")
    sections = {}
    for name, cls in _SECTIONS.items():
        merged = {**PRESETS[preset].get(name, {}), **data.get(name, {})}
        if name == "detection":
            merged.setdefault("camera_points", None)
            merged.setdefault("scan_points", None)
            raw_det = dict(merged)
            merged = {k: v for k, v in merged.items() if v is not None}
        sections[name] = _build_section(name, cls, merged)
    cfg = ScenarioConfig(scenario=scenario, preset=preset,
                         seed=int(data.get("seed", 0) if seed is None else seed),
                         export_pgm=bool(data.get("export_pgm", True)), **sections)
    cfg = replace(cfg, detection=_resolve_detection_windows(cfg, raw_det))
    validate_config(cfg)
    return cfg


def load_config(path, preset: str | None = None, seed: int | None = None) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return build_config(data, preset, seed)


def validate_config(cfg: ScenarioConfig) -> None:
    """Raise :class:`ConfigError` when grid, aperture or schedule settings clash."""
    g, o, sh = cfg.grid, cfg.optics, cfg.shaper
    if g.n < 16 or g.n & (g.n - 1):
        raise ConfigError(f"grid n must be a power of two >= 16, got {g.n}")
    if g.dx <= 0 or g.oversample < 1:
        raise ConfigError("grid dx must be positive and oversample >= 1")
    if o.screen_waist < 4 * g.dx:
        raise ConfigError(f"screen waist {o.screen_waist:g} m is under 4 grid samples "
                          f"({4 * g.dx:g} m)")
    aperture = o.aperture_factor * o.screen_waist
    if aperture > g.n * g.dx * (1 + 1e-9):
        raise ConfigError(f"segmented aperture {aperture:g} m exceeds the grid "
                          f"{g.n * g.dx:g} m; enlarge n or dx")
    if sh.segments < 1 or sh.segments > round(aperture / g.dx):
        raise ConfigError(f"{sh.segments} segments per side do not fit "
                          f"{round(aperture / g.dx)} aperture samples")
    if sh.n_phases < 3 or sh.budget < sh.n_phases:
        raise ConfigError("need n_phases >= 3 and a budget of at least one iteration")
    try:
        FeedbackSpec(sh.feedback, None, sh.probe_exposure)
        FeedbackSpec(cfg.dynamic.feedback, None, sh.probe_exposure)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.higher_mode.overlay not in OVERLAY_MODES:
        raise ConfigError(f"unknown overlay {cfg.higher_mode.overlay!r}")
    d = cfg.dynamic
    total = (d.pre_steps + d.on_steps + d.off_steps - 1) * max(abs(d.step[0]), abs(d.step[1]))
    if min(d.pre_steps, d.off_steps) < 0 or d.on_steps < 1 or d.iterations_per_shift < 1:
        raise ConfigError("dynamic schedule needs on_steps >= 1 and iterations_per_shift >= 1")
    if total >= g.n:
        raise ConfigError(f"dynamic schedule shifts {total} samples; keep it below n = {g.n}")
    if not 0 < d.settle_fraction <= 1:
        raise ConfigError("settle_fraction must lie in (0, 1]")
    v = cfg.validation
    if v.screens < 2 or v.n & (v.n - 1) or not 0 < v.min_lag <= v.max_lag < v.n:
        raise ConfigError("validation needs >= 2 screens, power-of-two n and 0 < lags < n")
    # detector windows must stay inside the computed far field
    m = g.n * g.oversample
    pump_pitch = far_field_pitch(g.n, g.dx, cfg.spdc.pump_wavelength, o.f, g.oversample)
    det = cfg.detection
    half_pump = pump_pitch * (m // 2 - 1)
    if det.camera_points * det.camera_pixel / 2 + det.camera_pixel > half_pump:
        raise ConfigError("camera window exceeds the computed far-field plane")
    reach = det.scan_points * det.scan_step / 2 + det.collection_diameter
    reach += max(abs(v) for v in cfg.spdc.idler_position)
    if reach > 2 * half_pump:
        raise ConfigError("coincidence scan exceeds the computed far-field plane")


# ---------------------------------------------------------------------------
# assembly helpers
# ---------------------------------------------------------------------------

def seeds_for(cfg: ScenarioConfig) -> dict:
    return {"master": cfg.seed, "screen": cfg.seed, "detection": [cfg.seed, 1],
            "shaper": [cfg.seed, 2]}


def make_tiling(cfg: ScenarioConfig, segments: int | None = None):
    return segment_tiling(cfg.grid.n, cfg.grid.dx, segments or cfg.shaper.segments,
                          cfg.optics.aperture_factor * cfg.optics.screen_waist)


def make_screen(cfg: ScenarioConfig, seed: int | None = None):
    return generate_screen(cfg.turbulence, cfg.grid.n, cfg.grid.dx,
                           cfg.seed if seed is None else seed)


def build_link(cfg: ScenarioConfig, screen=None, segments: int | None = None) -> OpticalLink:
    return OpticalLink(cfg.grid.n, cfg.grid.dx, cfg.optics.f, cfg.optics.screen_waist,
                       cfg.spdc, cfg.detection, make_tiling(cfg, segments), screen,
                       cfg.grid.oversample, cfg.optics.pump_peak_rate)


def derived_quantities(cfg: ScenarioConfig) -> dict:
    t, g, o = cfg.turbulence, cfg.grid, cfg.optics
    rho0, z_max = isoplanatic_bound(t.r0, t.wavelength)
    tiling = make_tiling(cfg)
    pump_pitch = far_field_pitch(g.n, g.dx, cfg.spdc.pump_wavelength, o.f, g.oversample)
    n_air_pump = air_refractive_index(1000.0, 300.0, cfg.spdc.pump_wavelength * 1e6)
    n_air_pair = air_refractive_index(1000.0, 300.0, cfg.spdc.pair_wavelength * 1e6)
    return {
        "r0": t.r0, "r0_pump_wavelength": t.r0_at(cfg.spdc.pump_wavelength),
        "l_o": t.l_o, "l_i": t.l_i, "k_o": t.k_o, "k_m": t.k_m,
        "rho0": rho0, "z_max": z_max,
        "screen_flags": list(screen_warnings(t, g.n, g.dx)),
        "grid_extent": g.n * g.dx, "r0_samples": t.r0 / g.dx,
        "pump_far_field_pitch": pump_pitch, "coincidence_far_field_pitch": 2 * pump_pitch,
        "far_field_samples": g.n * g.oversample,
        "pump_focus_waist": cfg.spdc.pump_wavelength * o.f / (np.pi * o.screen_waist),
        "speckle_grain_area_camera_pixels": speckle_grain_area_pixels(
            cfg.spdc.pump_wavelength, o.f, o.screen_waist, cfg.detection.camera_pixel),
        "speckle_halo_width_pump": cfg.spdc.pump_wavelength * o.f / t.r0,
        "segment_aperture": tiling.size * g.dx, "segment_aperture_samples": tiling.size,
        "segment_pitch": tiling.segment_pitch, "segments": tiling.segments,
        "camera_points": cfg.detection.camera_points, "scan_points": cfg.detection.scan_points,
        "pair_wavelength": cfg.spdc.pair_wavelength,
        "air_dispersion_ratio": (n_air_pump - 1) / (n_air_pair - 1),
        "validation_dx": t.r0 / cfg.validation.r0_samples,
    }


def manifest(cfg: ScenarioConfig) -> dict:
    from . import __version__
    return {"version": __version__, "config": cfg.to_dict(), "derived": derived_quantities(cfg),
            "seeds": seeds_for(cfg), "scaling_note": io.SCALING_NOTE}


def _base_metrics(cfg: ScenarioConfig) -> dict:
    return {"scenario": cfg.scenario, "eta_pump": None, "eta_spdc": None,
            "efficiency_pump": None, "efficiency_spdc": None, "pearson_scale2": None,
            "masks": {}, "seeds": seeds_for(cfg), "budgets": {}}


class _Writer:
    """Collects artifacts into an output directory (or nowhere)."""

    def __init__(self, out, cfg: ScenarioConfig):
        self.out = Path(out) if out is not None else None
        self.pgm = cfg.export_pgm
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str):
        return None if self.out is None else self.out / name

    def screen(self, name, screen, extra=None):
        if self.out is not None:
            io.write_screen(screen, self.out / f"{name}.bin", extra)
            if self.pgm:
                io.write_pgm(screen.wrapped(), self.out / f"{name}.pgm")

    def pattern(self, name, ffm, extra=None):
        if self.out is not None:
            io.write_pattern(ffm, self.out / f"{name}.bin", extra)

    def counts(self, name, cmap, extra=None):
        if self.out is not None:
            io.write_countmap(cmap, self.out / name, extra)
            if self.pgm:
                io.write_pgm(cmap.counts, self.out / f"{name}.pgm")

    def json(self, name, obj):
        if self.out is not None:
            io.dump_json(obj, self.out / name)


# ---------------------------------------------------------------------------
# screen-validate
# ---------------------------------------------------------------------------

def run_screen_validate(cfg: ScenarioConfig, out=None) -> dict:
    """Ensemble D(r) against the Kolmogorov law, the exact sampled-spectrum
    expectation and the continuum von Karman curve."""
    v, t = cfg.validation, cfg.turbulence
    dx = t.r0 / v.r0_samples
    w = _Writer(out, cfg)
    acc = StructureFunctionAccumulator(v.max_lag, dx)
    for k in range(v.screens):
        screen = generate_screen(t, v.n, dx, cfg.seed + k)
        acc.add(screen)
        if k == 0:
            w.screen("screen_0000", screen)
    sf = acc.result()
    kolmo = kolmogorov_structure_function(sf.r, t.r0)
    discrete = expected_structure_function(t, v.n, dx, sf.lags)
    band = (sf.lags >= v.min_lag) & (sf.lags <= v.max_lag)
    vk = von_karman_structure_function(sf.r[band], t)
    ratio = sf.d / kolmo
    iso = np.abs(sf.d_rows[band] / sf.d_cols[band] - 1)
    if w.out is not None:
        vk_full = np.full(len(sf.r), np.nan)
        vk_full[band] = vk
        io.write_rows_csv(["lag", "r", "d", "d_rows", "d_cols", "kolmogorov", "sampled_expected",
                           "von_karman"],
                          zip(sf.lags, sf.r, sf.d, sf.d_rows, sf.d_cols, kolmo, discrete, vk_full),
                          w.path("structure_function.csv"))
    m = _base_metrics(cfg)
    m.update({
        "screens": v.screens, "n": v.n, "dx": dx, "band_lags": [v.min_lag, v.max_lag],
        "tolerance": v.tolerance,
        "ratio_to_kolmogorov": {f"{int(l):03d}": float(r) for l, r in zip(sf.lags[band], ratio[band])},
        "ratio_to_sampled_expected": {f"{int(l):03d}": float(r) for l, r in
                                      zip(sf.lags[band], (sf.d / discrete)[band])},
        "ratio_to_von_karman": {f"{int(l):03d}": float(r) for l, r in
                                zip(sf.lags[band], sf.d[band] / vk)},
        "max_deviation_kolmogorov": float(np.max(np.abs(ratio[band] - 1))),
        "max_deviation_sampled_expected": float(np.max(np.abs(sf.d[band] / discrete[band] - 1))),
        "within_kolmogorov_band": bool(np.all(np.abs(ratio[band] - 1) <= v.tolerance)),
        "max_anisotropy": float(iso.max()),
        "d_at_r0": float(np.interp(t.r0, sf.r, sf.d)),
    })
    return m


# ---------------------------------------------------------------------------
# pattern comparisons
# ---------------------------------------------------------------------------

def scale_two_correlation(pump: FarFieldMap, coincidence: FarFieldMap, half_width: float) -> float:
    """Pearson correlation of the x2-magnified pump pattern and the coincidence
    pattern, on the pump grid within ``half_width`` of the coincidence centre."""
    magnified = rescale_pattern(replace(pump, origin=coincidence.origin), 2.0)
    pair = resample_pattern(coincidence, pump.pitch, coincidence.origin, pump.intensity.shape)
    x = np.abs(magnified.axis("x") - coincidence.origin[0]) <= half_width
    y = np.abs(magnified.axis("y") - coincidence.origin[1]) <= half_width
    region = y[:, None] & x[None, :]
    return pearson(magnified.intensity, pair.intensity, region)


def measured_scale_two_correlation(camera: CountMap, scan: CountMap) -> float:
    """Pearson correlation of a camera frame magnified x2 onto the scan grid."""
    cx, cy = scan.x[len(scan.x) // 2], scan.y[len(scan.y) // 2]
    cam = FarFieldMap(np.asarray(camera.counts, float), 2 * camera.pitch, 1.0, 1.0, (cx, cy))
    onto = resample_pattern(cam, scan.pitch, (cx, cy), scan.counts.shape)
    return pearson(onto.intensity, np.asarray(scan.counts, float))


# ---------------------------------------------------------------------------
# speckle
# ---------------------------------------------------------------------------

def run_speckle(cfg: ScenarioConfig, out=None) -> dict:
    w = _Writer(out, cfg)
    screen = make_screen(cfg)
    link = build_link(cfg, screen)
    rng = np.random.default_rng(seeds_for(cfg)["detection"])
    w.screen("screen", screen)
    pump = link.pump_pattern()
    pair = link.coincidence_density()
    half = cfg.detection.scan_points * cfg.detection.scan_step / 2
    rho = scale_two_correlation(pump, pair, half)
    frame = link.capture_pump(rng=rng)
    scan = subtract_accidentals(link.scan_pairs(exposure=cfg.speckle.exposure, rng=rng),
                                cfg.detection)
    w.counts("pump_camera", frame)
    w.counts("coincidence_scan", scan, {"beta": cfg.spdc.beta,
                                        "idler_position": list(cfg.spdc.idler_position),
                                        "pair_wavelength": cfg.spdc.pair_wavelength})
    sidecar = {"beta": cfg.spdc.beta, "idler_position": list(cfg.spdc.idler_position),
               "pair_wavelength": cfg.spdc.pair_wavelength}
    w.pattern("pump_far_field", pump)
    w.pattern("coincidence_far_field", pair, sidecar)
    rates = scan.rates
    m = _base_metrics(cfg)
    m.update({
        "pearson_scale2": rho,
        "pearson_scale2_measured": measured_scale_two_correlation(frame, scan),
        "beta": cfg.spdc.beta,
        "coincidence_contrast": float(rates.max() / rates.mean()),
        "camera_peak_counts": float(np.max(frame.counts)),
        "budgets": {"coincidence_exposure": cfg.speckle.exposure,
                    "camera_exposure": cfg.detection.camera_exposure},
    })
    return m


# ---------------------------------------------------------------------------
# static optimisation
# ---------------------------------------------------------------------------

@dataclass
class StaticResult:
    """Everything a static run produced, for callers that want arrays."""

    link: OpticalLink
    state: ControlState
    pump_mask: object
    spdc_mask: object
    pump_reference: CountMap
    pump_before: CountMap
    pump_after: CountMap
    pair_reference: CountMap
    pair_before: CountMap
    pair_after: CountMap
    expected: dict
    metrics: dict


def _expected_static(link: OpticalLink, control) -> dict:
    """Noise-free metrics from expected detector readings and noise-free masks."""
    cam, scan = link.camera, link.scan
    pump_ref = cam.read(link.pump_pattern(with_screen=False).intensity)
    pump_before = cam.read(link.pump_pattern().intensity)
    pump_after = cam.read(link.pump_pattern(control).intensity)
    pair_ref = scan.read(link.coincidence_density(with_screen=False).intensity)
    pair_before = scan.read(link.coincidence_density().intensity)
    pair_after = scan.read(link.coincidence_density(control).intensity)
    pump_mask, spdc_mask = target_mask(pump_ref), target_mask(pair_ref)
    return {
        "eta_pump": enhancement(pump_before, pump_after, pump_mask),
        "eta_spdc": enhancement(pair_before, pair_after, spdc_mask),
        "efficiency_pump": efficiency(pump_after, pump_ref, pump_mask),
        "efficiency_spdc": efficiency(pair_after, pair_ref, spdc_mask),
        "masks": {"pump": pump_mask.size, "spdc": spdc_mask.size},
    }


def optimize_static(cfg: ScenarioConfig, out=None, segments: int | None = None,
                    budget: int | None = None, feedback: str | None = None) -> StaticResult:
    w = _Writer(out, cfg)
    seeds = seeds_for(cfg)
    det_rng = np.random.default_rng(seeds["detection"])
    opt_rng = np.random.default_rng(seeds["shaper"])
    screen = make_screen(cfg)
    link = build_link(cfg, screen, segments)
    mode = feedback or cfg.shaper.feedback
    budget = budget or cfg.shaper.budget
    det = cfg.detection

    pump_ref = link.capture_pump(with_screen=False, rng=det_rng)
    pair_ref = subtract_accidentals(
        link.scan_pairs(with_screen=False, exposure=cfg.speckle.reference_exposure, rng=det_rng),
        det)
    pump_mask = target_mask(pump_ref, "pump_reference")
    spdc_mask = target_mask(pair_ref, "coincidence_reference")
    pump_before = link.capture_pump(rng=det_rng)
    pair_before = subtract_accidentals(
        link.scan_pairs(exposure=cfg.speckle.before_exposure, rng=det_rng), det)

    target = pump_mask if mode.startswith("pump") else spdc_mask
    spec = FeedbackSpec(mode, target, cfg.shaper.probe_exposure)
    fb = link.feedback(spec, rng=det_rng)
    state = ControlState.flat(link.tiling)
    state, trace = run_optimization(state, fb, budget, cfg.shaper.target_enhancement,
                                    cfg.shaper.n_phases, opt_rng)
    control = state.phase_screen()
    pump_after = link.capture_pump(control, rng=det_rng)
    pair_after = subtract_accidentals(link.scan_pairs(control, rng=det_rng), det)

    expected = _expected_static(link, control)
    m = _base_metrics(cfg)
    m.update({
        "eta_pump": enhancement(pump_before, pump_after, pump_mask),
        "eta_spdc": enhancement(pair_before, pair_after, spdc_mask),
        "efficiency_pump": efficiency(pump_after, pump_ref, pump_mask),
        "efficiency_spdc": efficiency(pair_after, pair_ref, spdc_mask),
        "expected": expected,
        "masks": {"pump": pump_mask.size, "spdc": spdc_mask.size},
        "budgets": {"budget": budget, "measurements": state.measurements,
                    "iterations": state.iteration, "n_phases": cfg.shaper.n_phases,
                    "feedback": mode, "segments": link.tiling.segments,
                    "probe_exposure": cfg.shaper.probe_exposure if mode == "coincidence_counts"
                    else None},
        "feedback_initial": fb.baseline,
        "feedback_final_expected": fb.expected(state.segments),
        "beta": cfg.spdc.beta,
    })
    m["eta_ratio_spdc_to_pump"] = m["eta_spdc"] / m["eta_pump"]

    if w.out is not None:
        w.screen("screen", screen)
        w.screen("control_phase", control, {"segments": link.tiling.segments})
        io.write_trace_csv(trace, w.path("trace.csv"))
        sidecar = {"beta": cfg.spdc.beta, "idler_position": list(cfg.spdc.idler_position),
                   "pair_wavelength": cfg.spdc.pair_wavelength}
        for name, cm in (("pump_reference", pump_ref), ("pump_before", pump_before),
                         ("pump_after", pump_after)):
            w.counts(name, cm)
        for name, cm in (("coincidence_reference", pair_ref),
                         ("coincidence_before", pair_before), ("coincidence_after", pair_after)):
            w.counts(name, cm, sidecar)
    return StaticResult(link, state, pump_mask, spdc_mask, pump_ref, pump_before, pump_after,
                        pair_ref, pair_before, pair_after, expected, m)


def run_optimize_static(cfg: ScenarioConfig, out=None) -> dict:
    return optimize_static(cfg, out).metrics


# ---------------------------------------------------------------------------
# dynamic optimisation
# ---------------------------------------------------------------------------

@dataclass
class DynamicResult:
    rows: list
    optimized_rate: float
    decay_steps: int | None
    decay_shift: float | None
    metrics: dict


def _centre_reading(geometry, pattern) -> float:
    i, j = len(geometry.y) // 2, len(geometry.x) // 2
    row = geometry.matrix[i * len(geometry.x) + j]
    return float((row @ pattern.intensity.ravel())[0])


def optimize_dynamic(cfg: ScenarioConfig, out=None) -> DynamicResult:
    """Frozen-flow run: idle, optimise while the screen moves, then freeze.

    The coincidence rate is followed on the single scan point at the pair
    focus; the decay is judged on its expected (noise-free) value.
    """
    d, det = cfg.dynamic, cfg.detection
    seeds = seeds_for(cfg)
    det_rng = np.random.default_rng(seeds["detection"])
    opt_rng = np.random.default_rng(seeds["shaper"])
    steps = d.pre_steps + d.on_steps + d.off_steps
    schedule = linear_schedule(steps, d.step)
    flow = make_frozen_flow(cfg.turbulence, cfg.grid.n, cfg.grid.dx, cfg.seed, schedule)
    base = build_link(cfg)
    ref_pump = base.capture_pump(with_screen=False, shot_noise=False)
    pump_mask = target_mask(ref_pump, "pump_reference")
    pair_ref_rate = _centre_reading(base.scan, base.coincidence_density(with_screen=False))
    state = ControlState.flat(base.tiling)
    rows = []
    shift_unit = math.hypot(*d.step) * cfg.grid.dx
    for k in range(steps):
        phase = "pre" if k < d.pre_steps else "on" if k < d.pre_steps + d.on_steps else "off"
        link = base.with_atmosphere(frozen_view(flow, k))
        if phase == "on":
            fb = link.feedback(FeedbackSpec(d.feedback, pump_mask, cfg.shaper.probe_exposure),
                               rng=det_rng)
            for _ in range(d.iterations_per_shift):
                partition_iteration(state, fb, cfg.shaper.n_phases, opt_rng)
        control = state.phase_screen()
        rate = _centre_reading(link.scan, link.coincidence_density(control))
        pump_target = float(np.sum(link.camera.read(link.pump_pattern(control).intensity)
                                   [pump_mask.mask]))
        mean_counts = (rate + det.accidental_rate) * d.dwell
        counts = int(det_rng.poisson(mean_counts))
        rows.append((k, phase, k * shift_unit, rate, counts,
                     counts / d.dwell - det.accidental_rate, pump_target))

    on = [r for r in rows if r[1] == "on"]
    settle = max(1, int(round(len(on) * d.settle_fraction)))
    optimized = float(np.mean([r[3] for r in on[-settle:]]))
    off = [r for r in rows if r[1] == "off"]
    decay_steps = next((j + 1 for j, r in enumerate(off) if r[3] < 0.5 * optimized), None)
    decay_shift = None if decay_steps is None else decay_steps * shift_unit
    pre = [r for r in rows if r[1] == "pre"]
    late_off = off[len(off) // 2:] or off
    on_pump = float(np.mean([r[6] for r in on[-settle:]]))

    def _mean(sel, col):
        return float(np.mean([r[col] for r in sel])) if sel else None

    m = _base_metrics(cfg)
    frozen_rate = _mean(late_off, 3)
    frozen_pump = _mean(late_off, 6)
    m.update({
        "optimized_rate": optimized,
        "unscattered_rate": pair_ref_rate,
        "pre_rate": _mean(pre, 3),
        "frozen_rate": frozen_rate,
        "decay_steps": decay_steps,
        "decay_shift": decay_shift,
        "decay_shift_r0": None if decay_shift is None else decay_shift / cfg.turbulence.r0,
        "eta_spdc": None if not frozen_rate else _mean(on, 3) / frozen_rate,
        "eta_pump": None if not frozen_pump else _mean(on, 6) / frozen_pump,
        "eta_spdc_measured": None if not late_off else
        _safe_ratio(_mean(on, 5), _mean(late_off, 5)),
        "efficiency_spdc": optimized / pair_ref_rate,
        "masks": {"pump": pump_mask.size, "spdc": 1},
        "budgets": {"iterations_per_shift": d.iterations_per_shift,
                    "measurements": state.measurements, "steps": steps,
                    "dwell": d.dwell, "feedback": d.feedback},
        "r0": cfg.turbulence.r0,
        "optimized_pump_target": on_pump,
    })
    if out is not None:
        w = _Writer(out, cfg)
        io.write_rows_csv(["step", "phase", "shift", "expected_rate", "counts", "corrected_rate",
                           "pump_target"], rows, w.path("dynamic_trace.csv"))
        io.write_trace_csv(state.trace, w.path("trace.csv"))
        w.screen("master_screen", flow.master)
        w.screen("control_phase", state.phase_screen())
    return DynamicResult(rows, optimized, decay_steps, decay_shift, m)


def _safe_ratio(a, b):
    return None if not b else a / b


def run_optimize_dynamic(cfg: ScenarioConfig, out=None) -> dict:
    return optimize_dynamic(cfg, out).metrics


# ---------------------------------------------------------------------------
# higher-order mode
# ---------------------------------------------------------------------------

def lobe_statistics(pattern: FarFieldMap, overlay: str) -> dict:
    """On-axis value against the two lobe maxima across the step line."""
    img = pattern.intensity
    i0, j0 = img.shape[0] // 2, img.shape[1] // 2
    # vertical step line -> lobes left/right; horizontal -> above/below
    if overlay == "pi_step_vertical":
        a, b = img[:, :j0].max(), img[:, j0 + 1:].max()
    else:
        a, b = img[:i0, :].max(), img[i0 + 1:, :].max()
    peak = max(a, b)
    return {"null_ratio": float(img[i0, j0] / peak), "lobe_balance": float(min(a, b) / peak)}


def run_higher_mode(cfg: ScenarioConfig, out=None) -> dict:
    res = optimize_static(cfg, out)
    link, overlay = res.link, cfg.higher_mode.overlay
    shaped = add_mode_overlay(res.state, overlay)
    control = shaped.phase_screen()
    pair = link.coincidence_density(control)
    # judge the null within the scan window only
    half = cfg.detection.scan_points * cfg.detection.scan_step / 2
    window = resample_pattern(pair, pair.pitch / 2, pair.origin,
                              (2 * int(half / (pair.pitch / 2)) + 1,) * 2)
    stats = lobe_statistics(window, overlay)
    scan_expected = link.scan.read(pair.intensity)
    scan_stats = lobe_statistics(FarFieldMap(scan_expected, cfg.detection.scan_step, 1, 1),
                                 overlay)
    det_rng = np.random.default_rng([cfg.seed, 3])
    scan = subtract_accidentals(link.scan_pairs(control, rng=det_rng), cfg.detection)
    if out is not None:
        w = _Writer(out, cfg)
        w.screen("control_phase_mode", control, {"overlay": overlay})
        w.counts("coincidence_mode", scan, {"beta": cfg.spdc.beta,
                                            "idler_position": list(cfg.spdc.idler_position),
                                            "pair_wavelength": cfg.spdc.pair_wavelength,
                                            "overlay": overlay})
        w.pattern("coincidence_mode_far_field", pair, {"beta": cfg.spdc.beta,
                                                       "idler_position":
                                                           list(cfg.spdc.idler_position),
                                                       "pair_wavelength":
                                                           cfg.spdc.pair_wavelength})
    m = dict(res.metrics)
    m.update({"scenario": cfg.scenario, "overlay": overlay,
              "null_ratio": stats["null_ratio"], "lobe_balance": stats["lobe_balance"],
              "null_ratio_scan": scan_stats["null_ratio"],
              "lobe_balance_scan": scan_stats["lobe_balance"]})
    return m


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

RUNNERS = {
    "screen-validate": run_screen_validate,
    "speckle": run_speckle,
    "optimize-static": run_optimize_static,
    "optimize-dynamic": run_optimize_dynamic,
    "higher-mode": run_higher_mode,
}


def run_scenario(cfg: ScenarioConfig, out) -> dict:
    """Run ``cfg.scenario`` and write manifest, metrics and artifacts into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    io.dump_json(manifest(cfg), out / "manifest.json")
    try:
        metrics = RUNNERS[cfg.scenario](cfg, out)
    except GridRangeError as exc:
        raise ConfigError(f"grid range problem: {exc}") from exc
    io.dump_json(metrics, out / "metrics.json")
    return metrics
