"""
Artifact exports: float32 binaries with JSON sidecars, 8-bit graymaps, CSV traces.

Binary grids are little-endian float32, row-major, no header. The sidecar
sits next to the binary with a ``.json`` suffix.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .detection import CountMap, write_countmap_csv
from .field_optics import FarFieldMap
from .turbulence import PhaseScreen

SCALING_NOTE = ("lab preset lengths are field lengths divided by 1000 "
                "(r0, outer and inner scale, beam, focal length)")


def _to_builtin(value):
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_builtin(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def dump_json(obj, path) -> None:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    text = json.dumps(_to_builtin(obj), sort_keys=True, indent=2, allow_nan=True)
    Path(path).write_text(text + "\n")


def write_grid(array, path, sidecar: dict) -> Path:
    path = Path(path)
    data = np.ascontiguousarray(array, dtype="<f4")
    path.write_bytes(data.tobytes(order="C"))
    meta = {"shape": list(data.shape), "dtype": "float32", "byte_order": "little",
            "layout": "row-major", **sidecar}
    dump_json(meta, path.with_suffix(".json"))
    return path


def read_grid(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype="<f4").reshape(meta["shape"])
    return data.copy(), meta


def screen_sidecar(screen: PhaseScreen) -> dict:
    recipe = screen.recipe
    out = {"n": screen.n, "dx": screen.dx, "seed": None, "cn2": None, "z": None,
           "lambda": None, "l_o": None, "l_i": None, "scaling_note": SCALING_NOTE}
    if recipe is not None:
        p = recipe.params
        out.update(seed=recipe.seed, cn2=p.cn2, z=p.z, l_o=p.l_o, l_i=p.l_i, r0=p.r0,
                   scale=p.scale, warnings=list(recipe.warnings))
        out["lambda"] = p.wavelength
    return out


def write_screen(screen: PhaseScreen, path, extra: dict | None = None) -> Path:
    return write_grid(screen.phase, path, {**screen_sidecar(screen), **(extra or {})})


def write_pattern(ffm: FarFieldMap, path, extra: dict | None = None) -> Path:
    meta = {"n": ffm.n, "pitch": ffm.pitch, "focal_length": ffm.focal_length,
            "wavelength": ffm.wavelength, "origin": list(ffm.origin), **ffm.meta,
            **(extra or {})}
    return write_grid(ffm.intensity, path, meta)


def write_countmap(cmap: CountMap, stem, extra: dict | None = None) -> tuple[Path, Path]:
    """CSV plus float32 binary; the sidecar records seed and correction flag."""
    stem = Path(stem)
    csv_path = stem.with_suffix(".csv")
    write_countmap_csv(cmap, csv_path)
    meta = {"kind": cmap.kind, "exposure": cmap.exposure, "corrected": cmap.corrected,
            "seed": cmap.seed, "x": cmap.x, "y": cmap.y, **cmap.meta, **(extra or {})}
    bin_path = write_grid(cmap.counts, stem.with_suffix(".bin"), meta)
    return csv_path, bin_path


def to_graymap(array) -> np.ndarray:
    """Linear 8-bit scaling of min..max; a constant array maps to zeros."""
    a = np.asarray(array, dtype=float)
    lo, hi = np.nanmin(a), np.nanmax(a)
    if hi <= lo:
        return np.zeros(a.shape, dtype=np.uint8)
    return np.round(255 * (a - lo) / (hi - lo)).astype(np.uint8)


def write_pgm(array, path) -> Path:
    """Binary (P5) portable graymap."""
    img = to_graymap(array)
    path = Path(path)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    path.write_bytes(header + img.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if fields[0] != b"P5":
        raise ValueError("not a binary graymap")
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(raw[pos + 1:pos + 1 + w * h], dtype=np.uint8).reshape(h, w)


def write_trace_csv(trace, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["measurement", "iteration", "probe_phase", "value"])
        for e in trace:
            w.writerow([int(e[0]), int(e[1]), repr(float(e[2])), repr(float(e[3]))])
    return path


def write_rows_csv(header, rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])
    return path
