"""Synthetic ground truth: vertical objects seen by a moving calibrated camera.

The simulator plays the role of the SLAM front end and the object detector.
It produces, per frame, the camera pose and noisy map features in
dimensionless map units (metric divided by ``d_star``) plus detection boxes,
and keeps the metric truth (``d_star``, heights, marker positions) apart.

Objects are vertical segments; their features are scattered laterally within
``radius_m`` of the axis. A detection box is the tight image box of the axis
segment, widened sideways to cover the lateral scatter, with optional edge
jitter.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import BehindCamera, InfeasiblePlacement
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    DetectionBox,
    FeatureEstimate,
    Frame,
    look_at,
    matrix_to_quat,
    project,
)

__all__ = [
    "Frame",
    "NoiseConfig",
    "ObjectSpec",
    "SceneConfig",
    "SceneObject",
    "SimScene",
    "TrajectoryConfig",
    "generate_scene",
    "render_frame",
    "render_sequence",
    "true_range",
]

MIN_VISIBLE_FRACTION = 0.8
MAX_PLACEMENT_TRIES = 200


@dataclass(frozen=True)
class ObjectSpec:
    class_id: int
    height_m: float
    radius_m: float = 0.02


@dataclass(frozen=True)
class TrajectoryConfig:
    preset: str = "arc"  # "arc" or "orbit"
    radius_m: float = 1.5
    height_m: float = 0.6
    sweep_deg: float = 90.0
    start_deg: float = 0.0
    target_height_m: float = 0.15
    radius_wobble_m: float = 0.15
    roll_deg: float = 4.0


@dataclass(frozen=True)
class NoiseConfig:
    """Feature noise and box jitter.

    ``feature_sigma`` is the per-axis std of map-point noise (map units).
    The reported covariance is ``cov_scale * sigma_k^2 * I`` where
    ``sigma_k = feature_sigma * (1 + initial_inflation * exp(-k / decay_frames))``;
    with ``decay_frames == 0`` the noise is static.
    """

    feature_sigma: float = 0.0
    box_jitter_px: float = 0.0
    cov_scale: float = 1.0
    initial_inflation: float = 0.0
    decay_frames: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"noise parameter {name} must be >= 0")

    def sigma_at(self, k: int) -> float:
        if self.decay_frames > 0:
            return self.feature_sigma * (1.0 + self.initial_inflation * math.exp(-k / self.decay_frames))
        return self.feature_sigma


@dataclass(frozen=True)
class SceneConfig:
    objects: tuple = (ObjectSpec(0, 0.30),) * 4
    d_star: float = 2.0
    vertical: tuple = (0.0, 0.0, 1.0)
    n_frames: int = 100
    trajectory: TrajectoryConfig = TrajectoryConfig()
    intrinsics: CameraIntrinsics = CameraIntrinsics(500.0, 500.0, 320.0, 240.0)
    image_size: tuple = (640, 480)
    features_per_object: int = 12
    feature_height_margin: float = 0.05
    outlier_features: int = 0
    placement_radius_m: float = 0.35
    min_separation_m: float = 0.12
    marker_side_m: float = 0.2
    box_pad_px: float = 2.0
    occlusion: bool = True
    occlusion_gap_px: float = 4.0

    def __post_init__(self):
        if not self.objects:
            raise ValueError("scene needs at least one object")
        if not self.d_star > 0:
            raise ValueError("d_star must be positive")
        if self.n_frames < 1:
            raise ValueError("trajectory must have at least one frame")
        for o in self.objects:
            if not o.height_m > 0 or o.radius_m < 0:
                raise ValueError(f"bad object spec {o}")

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneConfig":
        doc = dict(doc)
        if "objects" in doc:
            doc["objects"] = tuple(ObjectSpec(**o) for o in doc["objects"])
        if "trajectory" in doc:
            doc["trajectory"] = TrajectoryConfig(**doc["trajectory"])
        if "intrinsics" in doc:
            doc["intrinsics"] = CameraIntrinsics(**doc["intrinsics"])
        for key in ("vertical", "image_size"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


@dataclass(frozen=True)
class SceneObject:
    class_id: int
    base: np.ndarray  # metric, world frame
    height_m: float
    radius_m: float


@dataclass(frozen=True, eq=False)
class SimScene:
    objects: list
    d_star: float
    v: np.ndarray
    trajectory: list  # CameraPose in map units
    intrinsics: CameraIntrinsics
    image_size: tuple
    marker_features: np.ndarray  # (4, 3) metric
    feature_points: np.ndarray  # (N, 3) metric
    feature_owner: np.ndarray  # object index, -1 for off-object outliers
    seed: int
    box_pad_px: float = 2.0
    occlusion: bool = True
    occlusion_gap_px: float = 4.0

    @property
    def markers_map(self) -> np.ndarray:
        return self.marker_features / self.d_star


def _ground_basis(v):
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    helper = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(v, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(v, e1)
    return e1, e2, v


def _trajectory(cfg: SceneConfig, rng) -> list:
    """Metric camera poses on an arc or full orbit around the scene origin."""
    e1, e2, v = _ground_basis(cfg.vertical)
    t = cfg.trajectory
    sweep = 360.0 if t.preset == "orbit" else t.sweep_deg
    if t.preset not in ("arc", "orbit"):
        raise ValueError(f"unknown trajectory preset {t.preset!r}")
    n = cfg.n_frames
    phase = rng.uniform(0, 2 * math.pi, size=2)
    target = t.target_height_m * v
    poses = []
    for k in range(n):
        s = k / max(n - 1, 1) if t.preset == "arc" else k / n
        theta = math.radians(t.start_deg + s * sweep)
        r = t.radius_m + t.radius_wobble_m * math.sin(2 * math.pi * s + phase[0])
        center = r * (math.cos(theta) * e1 + math.sin(theta) * e2) + t.height_m * v
        R = look_at(center, target, v)
        roll = math.radians(t.roll_deg) * math.sin(4 * math.pi * s + phase[1])
        c, sn = math.cos(roll), math.sin(roll)
        Rz = np.array([[c, -sn, 0.0], [sn, c, 0.0], [0.0, 0.0, 1.0]])
        poses.append((Rz @ R, center))
    return poses


def _axis_ends_map(obj: SceneObject, v, d_star):
    base = obj.base / d_star
    return base, base + (obj.height_m / d_star) * v


def _visible(p_list, pose, K, size) -> bool:
    try:
        pts = [project(p, pose, K) for p in p_list]
    except BehindCamera:
        return False
    w, h = size
    return all(0 <= u <= w and 0 <= vv <= h for u, vv in pts)


def _overlap(a, b, gap) -> bool:
    return not (
        a.u_max + gap < b.u_min or b.u_max + gap < a.u_min
        or a.v_max + gap < b.v_min or b.v_max + gap < a.v_min
    )


def _placement_ok(objects, poses, config: SceneConfig, v) -> bool:
    for obj in objects:
        ends = _axis_ends_map(obj, v, config.d_star)
        seen = sum(_visible(ends, p, config.intrinsics, config.image_size) for p in poses)
        if seen < MIN_VISIBLE_FRACTION * len(poses):
            return False
    return True


def generate_scene(config: SceneConfig, seed: int) -> SimScene:
    """Place objects, markers and features; build the camera trajectory.

    Deterministic in ``(config, seed)``. Raises ``InfeasiblePlacement`` if no
    placement keeps every object fully in view for 80% of the poses.
    """
    rng = np.random.default_rng(seed)
    e1, e2, v = _ground_basis(config.vertical)
    d = config.d_star
    metric_poses = _trajectory(config, rng)
    poses = [CameraPose(matrix_to_quat(R), c / d) for R, c in metric_poses]
    K = config.intrinsics

    for _ in range(MAX_PLACEMENT_TRIES):
        bases = []
        for _ in config.objects:
            for _ in range(100):
                rr = config.placement_radius_m * math.sqrt(rng.uniform())
                phi = rng.uniform(0, 2 * math.pi)
                b = rr * (math.cos(phi) * e1 + math.sin(phi) * e2)
                if all(np.linalg.norm(b - o) >= config.min_separation_m for o in bases):
                    bases.append(b)
                    break
            else:
                break
        if len(bases) != len(config.objects):
            continue
        objects = [SceneObject(o.class_id, b, o.height_m, o.radius_m) for o, b in zip(config.objects, bases)]
        if _placement_ok(objects, poses, config, v):
            break
    else:
        raise InfeasiblePlacement(f"no feasible placement after {MAX_PLACEMENT_TRIES} tries")

    pts, owner = [], []
    m = config.feature_height_margin
    for i, obj in enumerate(objects):
        for _ in range(config.features_per_object):
            h = obj.height_m * rng.uniform(m, 1.0 - m)
            rr = obj.radius_m * math.sqrt(rng.uniform())
            phi = rng.uniform(0, 2 * math.pi)
            pts.append(obj.base + h * v + rr * (math.cos(phi) * e1 + math.sin(phi) * e2))
            owner.append(i)
    for _ in range(config.outlier_features):
        obj = objects[int(rng.integers(len(objects)))]
        rr = rng.uniform(2 * obj.radius_m + 0.05, 0.4)
        phi = rng.uniform(0, 2 * math.pi)
        h = obj.height_m * rng.uniform(m, 1.0 - m)
        pts.append(obj.base + h * v + rr * (math.cos(phi) * e1 + math.sin(phi) * e2))
        owner.append(-1)

    half = config.marker_side_m / 2
    markers = np.array([sx * half * e1 + sy * half * e2 for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))])

    return SimScene(
        objects=objects,
        d_star=float(d),
        v=v,
        trajectory=poses,
        intrinsics=K,
        image_size=tuple(config.image_size),
        marker_features=markers,
        feature_points=np.array(pts).reshape(-1, 3),
        feature_owner=np.array(owner, dtype=int),
        seed=int(seed),
        box_pad_px=config.box_pad_px,
        occlusion=config.occlusion,
        occlusion_gap_px=config.occlusion_gap_px,
    )


def _object_rect(scene: SimScene, obj: SceneObject, pose: CameraPose):
    """Unclipped image box of ``obj`` and its axis mid-depth, or ``None`` if behind."""
    K = scene.intrinsics
    ends = _axis_ends_map(obj, scene.v, scene.d_star)
    try:
        (ua, va), (ub, vb) = (project(p, pose, K) for p in ends)
    except BehindCamera:
        return None
    depths = [pose.to_camera(p)[2] for p in ends]
    pad = max(K.fx, K.fy) * (obj.radius_m / scene.d_star) / min(depths) + scene.box_pad_px
    rect = np.array([min(ua, ub) - pad, min(va, vb), max(ua, ub) + pad, max(va, vb)])
    return rect, 0.5 * (depths[0] + depths[1])


def detection_box(scene: SimScene, obj: SceneObject, pose: CameraPose, jitter=None):
    """Detection of ``obj`` from ``pose``, or ``None`` if it is not fully in the image."""
    found = _object_rect(scene, obj, pose)
    if found is None:
        return None
    rect = found[0] if jitter is None else found[0] + jitter
    w, h = scene.image_size
    if rect[0] < 0 or rect[1] < 0 or rect[2] > w or rect[3] > h:
        return None
    if not (rect[0] < rect[2] and rect[1] < rect[3]):
        return None
    return DetectionBox(obj.class_id, *map(float, rect))


def _inside(rect, px) -> bool:
    return rect[0] <= px[0] <= rect[2] and rect[1] <= px[1] <= rect[3]


def render_frame(scene: SimScene, k: int, noise: NoiseConfig = NoiseConfig(), detect_this_frame: bool = True) -> Frame:
    """Features and (optionally) detections seen from trajectory pose ``k``.

    Noise draws depend only on ``(scene.seed, k)``, so frames can be rendered
    independently and in any order. With occlusion on, an object whose box
    overlaps the box of a nearer object is not detected, and object features
    lying behind a nearer object's box are not reported.
    """
    if not 0 <= k < len(scene.trajectory):
        raise IndexError(f"frame {k} outside trajectory of {len(scene.trajectory)}")
    pose = scene.trajectory[k]
    K = scene.intrinsics
    rng = np.random.default_rng([scene.seed, k])
    sigma = noise.sigma_at(k)
    truth = scene.feature_points / scene.d_star
    n = len(truth)
    means = truth + rng.normal(0.0, 1.0, size=(n, 3)) * sigma
    cov = noise.cov_scale * sigma**2 * np.eye(3)
    jitter = rng.uniform(-1.0, 1.0, size=(len(scene.objects), 4)) * noise.box_jitter_px

    rects = [_object_rect(scene, o, pose) for o in scene.objects]
    occluded = [False] * len(rects)
    if scene.occlusion:
        g = scene.occlusion_gap_px
        boxes = [None if r is None else DetectionBox(0, *r[0]) for r in rects]
        for j, rj in enumerate(rects):
            for i, ri in enumerate(rects):
                if i != j and rj is not None and ri is not None and ri[1] < rj[1]:
                    if _overlap(boxes[i], boxes[j], g):
                        occluded[j] = True

    w, h = scene.image_size
    features = []
    for i, m in enumerate(means):
        try:
            u, vv = project(m, pose, K)
        except BehindCamera:
            continue
        if not (0 <= u <= w and 0 <= vv <= h):
            continue
        owner = scene.feature_owner[i]
        if scene.occlusion and owner >= 0:
            px = project(truth[i], pose, K)
            depth = pose.to_camera(truth[i])[2]
            if any(
                r is not None and j != owner and r[1] < depth and _inside(r[0], px)
                for j, r in enumerate(rects)
            ):
                continue
        features.append(FeatureEstimate(i, m, cov))

    detections = []
    if detect_this_frame:
        for j, obj in enumerate(scene.objects):
            if occluded[j]:
                continue
            box = detection_box(scene, obj, pose, jitter[j] if noise.box_jitter_px > 0 else None)
            if box is not None:
                detections.append(box)
    return Frame(k, pose, K, features, detections)


def render_sequence(scene: SimScene, noise: NoiseConfig = NoiseConfig(), cadence: int = 10):
    for k in range(len(scene.trajectory)):
        yield render_frame(scene, k, noise, detect_this_frame=(k % cadence == 0))


def true_range(scene: SimScene, k: int, marker_index: int) -> float:
    """Metric distance from the camera at pose ``k`` to marker ``marker_index``."""
    center_m = scene.d_star * scene.trajectory[k].center
    return float(np.linalg.norm(scene.marker_features[marker_index] - center_m))
