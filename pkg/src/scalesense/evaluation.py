"""Marker-distance error metrics and post-convergence statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyWindow, ZeroRange

ERROR_CSV_HEADER = (
    ["update", "frame", "d_map", "d_local"]
    + [f"e{i}" for i in range(1, 5)]
    + ["epsilon"]
    + [f"delta{i}" for i in range(1, 5)]
    + ["Delta", "Delta_baseline"]
)


@dataclass(frozen=True)
class ErrorSample:
    update: int
    frame: int
    e: np.ndarray  # meters, per marker
    epsilon: float  # meters
    delta: np.ndarray  # percent, per marker
    Delta: float  # percent
    d_used: float


@dataclass(frozen=True)
class ConvergenceReport:
    burn_in: int
    n_samples: int
    median_abs: float
    std_abs: float
    median_rel: float
    std_rel: float

    def format(self) -> str:
        return (
            f"after update {self.burn_in} ({self.n_samples} updates): "
            f"median abs error {self.median_abs:.4f} m (std {self.std_abs:.4f} m), "
            f"median rel error {self.median_rel:.4f} % (std {self.std_rel:.4f} %)"
        )


def marker_errors(d, markers_map, camera_center, true_ranges, *, update=0, frame=0) -> ErrorSample:
    """Absolute and relative range errors of the markers at scale ``d``.

    ``markers_map`` and ``camera_center`` are map-unit positions; the
    predicted range of marker ``i`` is ``d * |y_i - c|``.
    """
    ranges = np.asarray(true_ranges, dtype=float)
    if np.any(ranges <= 1e-9):
        raise ZeroRange("true marker range must be positive")
    dist = np.linalg.norm(np.asarray(markers_map, float) - np.asarray(camera_center, float), axis=1)
    e = np.abs(ranges - d * dist)
    delta = 100.0 * e / ranges
    return ErrorSample(update, frame, e, float(np.mean(e)), delta, float(np.mean(delta)), float(d))


def convergence_report(samples, burn_in: int) -> ConvergenceReport:
    """Median and (population) std of the errors over updates ``>= burn_in``."""
    window = [s for s in samples if s.update >= burn_in]
    if not window:
        raise EmptyWindow(f"no samples at or after update {burn_in}")
    eps = np.array([s.epsilon for s in window])
    rel = np.array([s.Delta for s in window])
    return ConvergenceReport(
        burn_in,
        len(window),
        float(np.median(eps)),
        float(np.std(eps)),
        float(np.median(rel)),
        float(np.std(rel)),
    )


def burn_in_update(n_updates: int, fraction: float) -> int:
    """First update index counted in the statistics (updates are 1-based)."""
    return int(round(fraction * n_updates)) + 1


def convergence_update(samples, threshold: float = 3.0):
    """First update after which the relative error stays at or below ``threshold`` %.

    Returns ``None`` if the last sample is still above the threshold.
    """
    first = None
    for s in samples:
        if s.Delta > threshold:
            first = None
        elif first is None:
            first = s.update
    return first
