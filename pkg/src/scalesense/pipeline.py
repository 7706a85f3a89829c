"""Simulate, estimate and evaluate runs, plus writing their output files."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .evaluation import (
    ERROR_CSV_HEADER,
    ConvergenceReport,
    burn_in_update,
    convergence_report,
    marker_errors,
)
from .inference import GeometryContext, PosteriorSnapshot, ScaleEstimator, snapshot, uniform_prior
from .priors import PriorRegistry, load_priors
from .simulator import generate_scene, render_sequence

log = logging.getLogger(__name__)

POSTERIOR_TRACE_HEADER = [
    "update", "frame", "feature_id", "class_id", "D", "sigma_D",
    "d_local", "d_map", "mean_d", "variance_d", "entropy",
]
LOCAL_TRACE_HEADER = ["update", "frame", "feature_id", "d_local"]

FRAMES_FILE = "frames.jsonl"
TRUTH_FILE = "truth.json"
POSTERIOR_FILE = "posterior_trace.csv"
LOCAL_FILE = "local_trace.csv"
ERRORS_FILE = "errors.csv"
REPORT_FILE = "report.json"


@dataclass
class EstimateResult:
    posterior_rows: list = field(default_factory=list)
    local_rows: list = field(default_factory=list)
    final: PosteriorSnapshot | None = None
    frames_seen: int = 0
    frames_used: int = 0
    dropped: Counter = field(default_factory=Counter)

    def summary(self) -> dict:
        f = self.final
        return {
            "frames_seen": self.frames_seen,
            "detection_frames": self.frames_used,
            "updates": f.update_count,
            "map_d": f.map_d,
            "mean_d": f.mean_d,
            "variance_d": f.variance_d,
            "entropy": f.entropy,
            "dropped": dict(sorted(self.dropped.items())),
        }


def simulate(config: formats.RunConfig):
    scene = generate_scene(config.scene, config.seed)
    frames = list(render_sequence(scene, config.noise, config.cadence))
    return scene, frames


def run_estimate(config: formats.RunConfig, frames, registry: PriorRegistry) -> EstimateResult:
    """Run the scale estimator over a frame stream.

    Detections are consumed only on frames whose index is a multiple of
    ``config.cadence``. One posterior-trace row is produced per update.
    """
    g = config.grid
    grid = uniform_prior(g.d_min, g.d_max, g.n_bins, g.spacing)
    ctx = GeometryContext(np.asarray(config.vertical, float), config.sigma_min, config.margin_px, config.sigma_gate)
    est = ScaleEstimator(registry, ctx, grid)
    out = EstimateResult(final=snapshot(grid, -1, 0))

    def record(rec):
        o = rec.observation
        p = rec.posterior
        out.posterior_rows.append(
            [rec.update, o.frame, o.feature_id, o.class_id, o.D, o.sigma_D,
             rec.local.mode, p.map_d, p.mean_d, p.variance_d, p.entropy]
        )
        out.local_rows.append([rec.update, o.frame, o.feature_id, rec.local.mode])

    for frame in frames:
        out.frames_seen += 1
        if frame.index % config.cadence != 0:
            continue
        out.frames_used += 1
        out.final, _ = est.process(frame, on_update=record)
    out.dropped = est.counts
    return out


def evaluate(posterior_rows, truth: dict, burn_in_fraction: float = 0.35):
    """Marker errors for every update row, plus the post-burn-in report.

    ``posterior_rows`` are dicts or lists following ``POSTERIOR_TRACE_HEADER``.
    Returns ``(error_rows, samples, report)``; ``report`` is ``None`` when
    there are no updates.
    """
    markers = np.array(truth["markers_map"])
    by_frame = {f["frame"]: f for f in truth["frames"]}
    rows, samples = [], []
    for r in posterior_rows:
        if not isinstance(r, dict):
            r = dict(zip(POSTERIOR_TRACE_HEADER, r))
        update, frame = int(r["update"]), int(r["frame"])
        d_map, d_local = float(r["d_map"]), float(r["d_local"])
        ft = by_frame[frame]
        s = marker_errors(d_map, markers, ft["center_map"], ft["ranges_m"], update=update, frame=frame)
        base = marker_errors(1.0, markers, ft["center_map"], ft["ranges_m"], update=update, frame=frame)
        samples.append(s)
        rows.append([update, frame, d_map, d_local, *s.e.tolist(), s.epsilon, *s.delta.tolist(), s.Delta, base.Delta])
    report = None
    if samples:
        report = convergence_report(samples, burn_in_update(len(samples), burn_in_fraction))
    return rows, samples, report


# ---------------------------------------------------------------------------
# file-level steps used by the CLI


def write_simulation(config: formats.RunConfig, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    scene, frames = simulate(config)
    with open(out_dir / FRAMES_FILE, "w", encoding="utf-8") as fp:
        formats.write_frames(frames, fp)
    (out_dir / TRUTH_FILE).write_text(json.dumps(formats.truth_document(scene), indent=1) + "\n", encoding="utf-8")
    return scene, frames


def write_estimate(config: formats.RunConfig, frames_path: Path, out_dir: Path) -> EstimateResult:
    registry = load_priors(Path(config.priors))
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_estimate(config, formats.parse_frame_stream(frames_path), registry)
    formats.write_csv(out_dir / POSTERIOR_FILE, POSTERIOR_TRACE_HEADER, result.posterior_rows)
    formats.write_csv(out_dir / LOCAL_FILE, LOCAL_TRACE_HEADER, result.local_rows)
    return result


def write_evaluation(trace_path: Path, truth_path: Path, out_dir: Path, burn_in_fraction: float):
    truth = json.loads(Path(truth_path).read_text(encoding="utf-8"))
    rows, samples, report = evaluate(formats.read_csv(trace_path), truth, burn_in_fraction)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats.write_csv(out_dir / ERRORS_FILE, ERROR_CSV_HEADER, rows)
    doc = {"updates": len(samples), "report": None if report is None else vars(report)}
    (out_dir / REPORT_FILE).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return rows, report


def format_report(result: EstimateResult | None, report: ConvergenceReport | None, d_star=None) -> str:
    lines = []
    if result is not None:
        s = result.summary()
        lines.append(
            f"{s['updates']} updates over {s['detection_frames']} detection frames "
            f"({s['frames_seen']} frames read)"
        )
        lines.append(f"final MAP scale {s['map_d']:.5f} (posterior mean {s['mean_d']:.5f}, var {s['variance_d']:.3g})")
        if d_star is not None:
            lines.append(f"true scale {d_star:.5f}, relative error {100 * abs(s['map_d'] - d_star) / d_star:.3f} %")
        if s["dropped"]:
            lines.append("dropped observations: " + ", ".join(f"{k}={v}" for k, v in s["dropped"].items()))
    if report is not None:
        lines.append(report.format())
    elif result is None or not result.posterior_rows:
        lines.append("no updates; nothing to evaluate")
    return "\n".join(lines)
