"""On-disk formats: frame feed (JSONL), ground-truth sidecar, run config, CSV traces.

Frame feed, one JSON object per line::

    {"frame": 0,
     "pose": {"q": [w, x, y, z], "center": [x, y, z]},
     "intrinsics": {"fx": 500.0, "fy": 500.0, "cx": 320.0, "cy": 240.0},
     "features": [{"id": 3, "mean": [x, y, z],
                   "cov": [p00, p01, p02, p11, p12, p22]}],
     "detections": [{"class_id": 0, "rect": [u_min, v_min, u_max, v_max]}]}

Floats are written with Python's shortest round-tripping repr, so
write -> parse -> write reproduces the same bytes.
"""
from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonMonotonicFrame, ParseError, ScaleSenseError
from .geometry import CameraIntrinsics, CameraPose, DetectionBox, FeatureEstimate, Frame
from .simulator import NoiseConfig, SceneConfig, SimScene, true_range

SEED_ENV = "SCALESENSE_SEED"
_TRIU = np.triu_indices(3)


class ConfigError(ScaleSenseError):
    pass


# ---------------------------------------------------------------------------
# frames


def frame_to_record(frame: Frame) -> dict:
    K = frame.intrinsics
    return {
        "frame": int(frame.index),
        "pose": {"q": frame.pose.quaternion.tolist(), "center": frame.pose.center.tolist()},
        "intrinsics": {"fx": float(K.fx), "fy": float(K.fy), "cx": float(K.cx), "cy": float(K.cy)},
        "features": [
            {"id": int(f.id), "mean": f.mean.tolist(), "cov": f.covariance[_TRIU].tolist()}
            for f in frame.features
        ],
        "detections": [{"class_id": int(d.class_id), "rect": [float(x) for x in d.rect]} for d in frame.detections],
    }


def dumps_frame(frame: Frame) -> str:
    return json.dumps(frame_to_record(frame), separators=(",", ":"))


def write_frames(frames, fp) -> int:
    n = 0
    for frame in frames:
        fp.write(dumps_frame(frame) + "\n")
        n += 1
    return n


def _vec(x, n, name):
    if not isinstance(x, list) or len(x) != n:
        raise ValueError(f"{name}: expected a list of {n} numbers")
    out = np.array(x, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name}: non-finite value")
    return out


def record_to_frame(rec: dict) -> Frame:
    """Validate and convert one parsed JSON record. Raises ``ValueError`` naming the field."""
    try:
        index = rec["frame"]
        if not isinstance(index, int):
            raise ValueError("frame: must be an integer")
        pose = rec["pose"]
        try:
            cam = CameraPose(_vec(pose["q"], 4, "pose.q"), _vec(pose["center"], 3, "pose.center"))
        except ValueError as exc:
            raise ValueError(f"pose: {exc}") from None
        k = rec["intrinsics"]
        try:
            K = CameraIntrinsics(float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]))
        except ValueError as exc:
            raise ValueError(f"intrinsics: {exc}") from None
        features = []
        for j, f in enumerate(rec.get("features", [])):
            cov_t = _vec(f["cov"], 6, f"features[{j}].cov")
            P = np.zeros((3, 3))
            P[_TRIU] = cov_t
            P = P + np.triu(P, 1).T
            try:
                features.append(FeatureEstimate(int(f["id"]), _vec(f["mean"], 3, f"features[{j}].mean"), P))
            except ValueError as exc:
                raise ValueError(f"features[{j}]: {exc}") from None
        detections = []
        for j, d in enumerate(rec.get("detections", [])):
            u0, v0, u1, v1 = _vec(d["rect"], 4, f"detections[{j}].rect")
            if not u0 < u1:
                raise ValueError(f"detections[{j}].rect: u_min must be < u_max")
            if not v0 < v1:
                raise ValueError(f"detections[{j}].rect: v_min must be < v_max")
            detections.append(DetectionBox(int(d["class_id"]), float(u0), float(v0), float(u1), float(v1)))
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r}") from None
    except TypeError as exc:
        raise ValueError(f"wrong type: {exc}") from None
    return Frame(index, cam, K, features, detections)


def parse_frame_stream(source):
    """Yield frames from JSONL lines (a path or an iterable of strings).

    Raises ``ParseError`` with the 1-based line number on malformed input and
    ``NonMonotonicFrame`` when frame indices do not strictly increase.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fp:
            yield from parse_frame_stream(fp)
        return
    last = None
    for lineno, line in enumerate(source, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise ParseError(lineno, "record must be a JSON object")
        try:
            frame = record_to_frame(rec)
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        if last is not None and frame.index <= last:
            raise NonMonotonicFrame(lineno, f"frame {frame.index} follows frame {last}")
        last = frame.index
        yield frame


# ---------------------------------------------------------------------------
# ground truth sidecar


def truth_document(scene: SimScene) -> dict:
    return {
        "d_star": scene.d_star,
        "vertical": scene.v.tolist(),
        "objects": [
            {"class_id": o.class_id, "base_m": o.base.tolist(), "height_m": o.height_m, "radius_m": o.radius_m}
            for o in scene.objects
        ],
        "markers_m": scene.marker_features.tolist(),
        "markers_map": scene.markers_map.tolist(),
        "frames": [
            {
                "frame": k,
                "center_map": pose.center.tolist(),
                "ranges_m": [true_range(scene, k, i) for i in range(len(scene.marker_features))],
            }
            for k, pose in enumerate(scene.trajectory)
        ],
    }


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class GridConfig:
    d_min: float = 0.05
    d_max: float = 20.0
    n_bins: int = 4096
    spacing: str = "log"


@dataclass
class RunConfig:
    """Everything a simulate/estimate/evaluate run needs."""

    priors: Path | None = None
    seed: int = 0
    cadence: int = 10
    sigma_min: float = 1e-4
    margin_px: float = 1.0
    sigma_gate: float | None = None
    burn_in_fraction: float = 0.35
    vertical: tuple = (0.0, 0.0, 1.0)
    grid: GridConfig = field(default_factory=GridConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)

    def __post_init__(self):
        if self.cadence < 1:
            raise ConfigError("cadence must be >= 1")
        if not 0 <= self.burn_in_fraction < 1:
            raise ConfigError("burn_in_fraction must lie in [0, 1)")
        if self.sigma_min <= 0:
            raise ConfigError("sigma_min must be positive")

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "RunConfig":
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "grid" in doc:
                doc["grid"] = GridConfig(**doc["grid"])
            if "noise" in doc:
                doc["noise"] = NoiseConfig(**doc["noise"])
            if "scene" in doc:
                doc["scene"] = SceneConfig.from_dict(doc["scene"])
                doc.setdefault("vertical", doc["scene"].vertical)
            if "vertical" in doc:
                doc["vertical"] = tuple(float(x) for x in doc["vertical"])
            if doc.get("priors") is not None:
                p = Path(doc["priors"])
                if base_dir is not None and not p.is_absolute():
                    p = base_dir / p
                doc["priors"] = p
            cfg = cls(**doc)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        env_seed = os.environ.get(SEED_ENV)
        if env_seed is not None:
            try:
                cfg.seed = int(env_seed)
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
        return cfg

    def check_paths(self):
        if self.priors is None:
            raise ConfigError("config does not name a prior file")
        if not Path(self.priors).is_file():
            raise ConfigError(f"prior file not found: {self.priors}")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["priors"] = None if self.priors is None else str(self.priors)
        return doc


def load_config(path) -> RunConfig:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(doc, base_dir=path.parent)


# ---------------------------------------------------------------------------
# CSV


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path_or_fp, header, rows):
    if isinstance(path_or_fp, (str, Path)):
        with open(path_or_fp, "w", encoding="utf-8", newline="") as fp:
            return write_csv(fp, header, rows)
    w = csv.writer(path_or_fp, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(x) for x in row])


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    write_csv(buf, header, rows)
    return buf.getvalue()


def read_csv(path) -> list:
    with open(path, encoding="utf-8", newline="") as fp:
        return list(csv.DictReader(fp))
