"""
Figures of merit: target masks, enhancement, efficiency, correlations and
phase structure functions.

Pattern arguments may be plain arrays, :class:`FarFieldMap` or
:class:`CountMap`; count maps are compared as rates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .detection import CountMap
from .field_optics import FarFieldMap


def values(pattern) -> np.ndarray:
    if isinstance(pattern, FarFieldMap):
        return np.asarray(pattern.intensity, dtype=float)
    if isinstance(pattern, CountMap):
        return pattern.rates if pattern.exposure > 0 else np.asarray(pattern.counts, float)
    if hasattr(pattern, "phase"):
        return np.asarray(pattern.phase, dtype=float)
    return np.asarray(pattern, dtype=float)


@dataclass(frozen=True)
class TargetMask:
    mask: np.ndarray
    source: str = "reference"

    def __post_init__(self):
        if not self.mask.any():
            raise DomainError("target mask is empty")

    @property
    def size(self) -> int:
        return int(self.mask.sum())


def target_mask(reference, source: str = "reference", fraction: float = 0.25) -> TargetMask:
    """Pixels at or above a quarter of the maximum of an unscattered reference."""
    ref = values(reference)
    peak = ref.max()
    if not peak > 0:
        raise DomainError("reference pattern has no positive maximum")
    return TargetMask(ref >= fraction * peak, source)


def _mask_array(mask) -> np.ndarray:
    return mask.mask if isinstance(mask, TargetMask) else np.asarray(mask, dtype=bool)


def enhancement(before, after, mask) -> float:
    """Target signal after optimisation over the mean speckle signal before.

    The "before" mean is taken over the whole supplied pattern (the scanned
    speckle window) and multiplied by the number of target pixels.
    """
    m = _mask_array(mask)
    b, a = values(before), values(after)
    if b.shape != m.shape or a.shape != m.shape:
        raise DomainError("patterns and mask must share one grid")
    denom = b.mean() * m.sum()
    if denom == 0:
        raise DomainError("mean speckle signal before optimisation is zero")
    return float(a[m].sum() / denom)


def efficiency(after, unscattered, mask) -> float:
    """Target signal after optimisation relative to the same target without a screen."""
    m = _mask_array(mask)
    a, u = values(after), values(unscattered)
    denom = u[m].sum()
    if denom == 0:
        raise DomainError("unscattered target signal is zero")
    return float(a[m].sum() / denom)


def pearson(a, b, region=None) -> float:
    x, y = values(a), values(b)
    if x.shape != y.shape:
        raise DomainError(f"shape mismatch {x.shape} vs {y.shape}")
    if region is not None:
        r = _mask_array(region)
        x, y = x[r], y[r]
    x = x.ravel() - x.mean()
    y = y.ravel() - y.mean()
    sx, sy = np.sqrt(np.dot(x, x)), np.sqrt(np.dot(y, y))
    if sx == 0 or sy == 0:
        raise DomainError("correlation undefined for a constant pattern")
    return float(np.clip(np.dot(x, y) / (sx * sy), -1.0, 1.0))


@dataclass(frozen=True)
class StructureFunction:
    lags: np.ndarray          # samples
    r: np.ndarray             # metres
    d: np.ndarray             # both axes pooled
    d_rows: np.ndarray        # separations along a row (x)
    d_cols: np.ndarray        # separations along a column (y)
    n_screens: int


def structure_function(screens, max_lag: int | None = None, dx: float | None = None) -> StructureFunction:
    """Ensemble phase structure function for axis-aligned separations.

    Averages (phi(x + r) - phi(x))^2 over all positions whose partner stays
    on the grid, over both axes and over the ensemble.
    """
    screens = list(screens)
    if len(screens) < 2:
        raise DomainError("need at least two screens")
    n = values(screens[0]).shape[0]
    dx = dx if dx is not None else getattr(screens[0], "dx", 1.0)
    acc = StructureFunctionAccumulator(max_lag or n // 2, dx)
    for s in screens:
        acc.add(s)
    return acc.result()


class StructureFunctionAccumulator:
    """Streaming version of :func:`structure_function` for large ensembles."""

    def __init__(self, max_lag: int, dx: float):
        self.lags = np.arange(1, max_lag + 1)
        self.dx = dx
        self.rows = np.zeros(max_lag)
        self.cols = np.zeros(max_lag)
        self.count = 0

    def add(self, screen) -> None:
        p = values(screen)
        for i, m in enumerate(self.lags):
            self.rows[i] += np.mean((p[:, m:] - p[:, :-m]) ** 2)
            self.cols[i] += np.mean((p[m:, :] - p[:-m, :]) ** 2)
        self.count += 1

    def result(self) -> StructureFunction:
        if self.count < 2:
            raise DomainError("need at least two screens")
        rows, cols = self.rows / self.count, self.cols / self.count
        return StructureFunction(self.lags, self.lags * self.dx, (rows + cols) / 2, rows, cols,
                                 self.count)
