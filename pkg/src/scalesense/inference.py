"""Discretized Bayesian posterior over the global map scale ``d``.

The posterior lives on a fixed grid of scale values and is stored as log
densities. Each height observation multiplies it by a likelihood built from
the class height prior; the MAP bin centre is the scale estimate.
"""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import geometry
from .errors import DegenerateUpdate, GeometryError, InvalidBounds, UnknownClass
from .priors import HeightHistogram, PriorRegistry, lookup

log = logging.getLogger(__name__)

LIKELIHOOD_FLOOR = 1e-300
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _logsumexp(x: np.ndarray) -> float:
    m = np.max(x)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(x - m))))


@dataclass(frozen=True, eq=False)
class ScaleGrid:
    """Piecewise-constant density over ``[d_min, d_max]``.

    ``log_weights[i]`` is the log density in bin ``i``; the bin masses
    ``exp(log_weights) * widths`` sum to one.
    """

    d_min: float
    d_max: float
    n_bins: int
    spacing: str
    log_weights: np.ndarray

    @cached_property
    def edges(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.d_min, self.d_max, self.n_bins + 1)
        return np.linspace(self.d_min, self.d_max, self.n_bins + 1)

    @cached_property
    def centers(self) -> np.ndarray:
        e = self.edges
        if self.spacing == "log":
            return np.sqrt(e[:-1] * e[1:])
        return 0.5 * (e[:-1] + e[1:])

    @cached_property
    def widths(self) -> np.ndarray:
        if self.spacing == "linear":
            # exact equal widths keep a flat density exactly flat
            return np.full(self.n_bins, (self.d_max - self.d_min) / self.n_bins)
        return np.diff(self.edges)

    @property
    def density(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def masses(self) -> np.ndarray:
        return np.exp(self.log_weights) * self.widths

    def normalized(self) -> "ScaleGrid":
        lw = self.log_weights - _logsumexp(self.log_weights + np.log(self.widths))
        return replace(self, log_weights=lw)

    def relative_bin_width(self, d: float) -> float:
        i = int(np.clip(np.searchsorted(self.edges, d) - 1, 0, self.n_bins - 1))
        return float(self.widths[i] / self.centers[i])


@dataclass(frozen=True)
class PosteriorSnapshot:
    frame: int
    map_d: float
    mean_d: float
    variance_d: float
    entropy: float
    update_count: int


@dataclass(frozen=True)
class LocalEstimate:
    frame: int
    feature_id: int
    mode: float


def uniform_prior(d_min=0.05, d_max=20.0, n_bins=4096, spacing="log") -> ScaleGrid:
    """Uninformative starting posterior: equal mass in every bin.

    On a linear grid that is a flat density in ``d``; on a log grid it is flat
    in ``log d``.
    """
    if not (0 < d_min < d_max) or not math.isfinite(d_max):
        raise InvalidBounds(f"need 0 < d_min < d_max, got [{d_min}, {d_max}]")
    if int(n_bins) < 2:
        raise InvalidBounds(f"need at least 2 bins, got {n_bins}")
    if spacing not in ("linear", "log"):
        raise InvalidBounds(f"unknown spacing {spacing!r}")
    grid = ScaleGrid(float(d_min), float(d_max), int(n_bins), spacing, np.zeros(int(n_bins)))
    return replace(grid, log_weights=-np.log(grid.n_bins * grid.widths))


def observation_likelihood(obs, prior: HeightHistogram, grid: ScaleGrid) -> np.ndarray:
    """Height-prior mixture likelihood of one observation at every grid centre.

    ``L(d) = sum_m N(d*D - H_m; 0, (sigma_D*D)^2) * p_m``. The Gaussian width
    ``sigma_D*D`` makes ``L`` have standard deviation ``sigma_D`` as a
    function of ``d``. Not normalized.
    """
    D, sigma = obs.D, obs.sigma_D * obs.D
    resid = grid.centers[:, None] * D - prior.heights[None, :]
    pdf = np.exp(-0.5 * (resid / sigma) ** 2) / (sigma * _SQRT_2PI)
    return pdf @ prior.probs


def update_posterior(grid: ScaleGrid, L, floor: float = LIKELIHOOD_FLOOR) -> ScaleGrid:
    L = np.asarray(L, dtype=float)
    if L.shape != grid.log_weights.shape:
        raise ValueError(f"likelihood has shape {L.shape}, grid has {grid.n_bins} bins")
    if np.any(L < 0) or np.any(np.isnan(L)):
        raise ValueError("likelihood entries must be non-negative")
    if not np.any(L > floor):
        raise DegenerateUpdate("likelihood is below the floor on the whole grid")
    lw = grid.log_weights + np.log(np.maximum(L, floor))
    return replace(grid, log_weights=lw).normalized()


def _argmax_center(values, grid: ScaleGrid) -> float:
    # np.argmax returns the lowest index among ties
    return float(grid.centers[int(np.argmax(values))])


def map_estimate(grid: ScaleGrid) -> float:
    return _argmax_center(grid.log_weights, grid)


def local_mode(L, grid: ScaleGrid) -> float:
    return _argmax_center(L, grid)


def posterior_stats(grid: ScaleGrid) -> tuple:
    """Mean, variance and entropy (nats, over bin masses) of the posterior."""
    m = grid.masses
    c = grid.centers
    mean = float(m @ c)
    var = float(m @ (c - mean) ** 2)
    nz = m[m > 0]
    entropy = float(-(nz @ np.log(nz)))
    return mean, var, max(entropy, 0.0)


def snapshot(grid: ScaleGrid, frame: int, update_count: int) -> PosteriorSnapshot:
    mean, var, ent = posterior_stats(grid)
    return PosteriorSnapshot(frame, map_estimate(grid), mean, var, ent, update_count)


@dataclass
class GeometryContext:
    """Everything besides the frame that turning features into observations needs."""

    vertical: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    sigma_min: float = geometry.DEFAULT_SIGMA_MIN
    margin: float = geometry.DEFAULT_MARGIN_PX
    sigma_gate: float | None = None


@dataclass(frozen=True)
class UpdateRecord:
    """One applied posterior update, as written to the trace."""

    update: int
    observation: geometry.HeightObservation
    local: LocalEstimate
    posterior: PosteriorSnapshot
    grid: ScaleGrid


def frame_observations(frame, reg: PriorRegistry, ctx: GeometryContext, counts: Counter):
    """Yield ``(observation, histogram)`` for every usable feature/detection pair."""
    for det in frame.detections:
        try:
            hist = lookup(reg, det.class_id)
        except UnknownClass:
            counts["UnknownClass"] += 1
            continue
        for feat in frame.features:
            try:
                pi = geometry.project(feat.mean, frame.pose, frame.intrinsics)
            except GeometryError:
                continue
            if not det.contains(pi, ctx.margin):
                continue
            try:
                obs = geometry.make_observation(
                    feat, det, frame.pose, frame.intrinsics, ctx.vertical,
                    frame.index, ctx.sigma_min, ctx.margin,
                )
            except GeometryError as exc:
                counts[type(exc).__name__] += 1
                continue
            if ctx.sigma_gate is not None and obs.sigma_D > ctx.sigma_gate:
                counts["SigmaGated"] += 1
                continue
            yield obs, hist


def process_frame(
    grid: ScaleGrid,
    frame,
    reg: PriorRegistry,
    ctx: GeometryContext,
    *,
    update_count: int = 0,
    counts: Counter | None = None,
    on_update=None,
):
    """Apply one update per (feature inside detection) pair of ``frame``.

    Returns the new grid, a snapshot taken after the frame, and the local
    estimate of every applied update. Failed observations are counted in
    ``counts`` by error name and skipped. ``on_update`` receives an
    :class:`UpdateRecord` after each update.
    """
    counts = Counter() if counts is None else counts
    locals_ = []
    for obs, hist in frame_observations(frame, reg, ctx, counts):
        L = observation_likelihood(obs, hist, grid)
        try:
            grid = update_posterior(grid, L)
        except DegenerateUpdate:
            log.info("frame %d feature %d: degenerate likelihood, skipped", frame.index, obs.feature_id)
            counts["DegenerateUpdate"] += 1
            continue
        update_count += 1
        local = LocalEstimate(frame.index, obs.feature_id, local_mode(L, grid))
        locals_.append(local)
        if on_update is not None:
            on_update(UpdateRecord(update_count, obs, local, snapshot(grid, frame.index, update_count), grid))
    return grid, snapshot(grid, frame.index, update_count), locals_


class ScaleEstimator:
    """Streaming wrapper: feed frames in order, read the current estimate."""

    def __init__(self, reg: PriorRegistry, ctx: GeometryContext | None = None, grid: ScaleGrid | None = None):
        self.registry = reg
        self.ctx = ctx or GeometryContext()
        self.grid = grid if grid is not None else uniform_prior()
        self.update_count = 0
        self.counts = Counter()

    def process(self, frame, on_update=None):
        self.grid, snap, locals_ = process_frame(
            self.grid, frame, self.registry, self.ctx,
            update_count=self.update_count, counts=self.counts, on_update=on_update,
        )
        self.update_count = snap.update_count
        return snap, locals_

    @property
    def estimate(self) -> float:
        return map_estimate(self.grid)
