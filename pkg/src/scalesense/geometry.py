"""Pinhole camera geometry and the height measurement of a detected object.

Everything here lives in the dimensionless map frame produced by a monocular
SLAM system. A feature that projects inside a detection box is turned into a
measurement of the object's height in map units (``D``) together with a
propagated standard deviation (``sigma_D``).

Conventions: image ``u`` grows to the right, ``v`` grows downwards, the
camera looks along its own ``+z`` axis. ``CameraPose.rotation`` maps world
vectors into the camera frame, ``CameraPose.center`` is the camera position
in the world frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import (
    BehindCamera,
    DegenerateLine,
    FeatureOutsideBox,
    NoIntersection,
    NonPositiveVariance,
    ParallelLines,
    Tangent,
    ZeroHeight,
)

MIN_DEPTH = 1e-9
MIN_SEGMENT_PX = 1e-6
DEFAULT_SIGMA_MIN = 1e-4
DEFAULT_MARGIN_PX = 1.0


# ---------------------------------------------------------------------------
# rotations


def quat_to_matrix(q) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` to a 3x3 rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R) -> np.ndarray:
    """Rotation matrix to a unit quaternion ``(w, x, y, z)`` with ``w >= 0``."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def look_at(center, target, up) -> np.ndarray:
    """World-to-camera rotation for a camera at ``center`` looking at ``target``.

    ``up`` is the world direction that should appear upwards in the image.
    """
    forward = np.asarray(target, float) - np.asarray(center, float)
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    n = np.linalg.norm(right)
    if n < 1e-12:
        raise ValueError("viewing direction is parallel to the up vector")
    right /= n
    down = np.cross(forward, right)
    return np.vstack([right, down, forward])


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Camera orientation and position in the map.

    The quaternion is the stored representation so that serialized poses
    survive a write/parse/write cycle bit for bit; ``rotation`` is derived.
    """

    quaternion: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quaternion, dtype=float)
        c = np.asarray(self.center, dtype=float)
        if q.shape != (4,) or c.shape != (3,):
            raise ValueError("pose needs a 4-element quaternion and a 3-element center")
        if not abs(np.linalg.norm(q) - 1.0) < 1e-9:
            raise ValueError("pose quaternion must have unit norm")
        object.__setattr__(self, "quaternion", q)
        object.__setattr__(self, "center", c)

    @classmethod
    def from_matrix(cls, rotation, center) -> "CameraPose":
        R = np.asarray(rotation, dtype=float)
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9 or np.linalg.det(R) < 0:
            raise ValueError("rotation must be orthonormal with determinant +1")
        return cls(matrix_to_quat(R), center)

    @cached_property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def to_camera(self, p) -> np.ndarray:
        return self.rotation @ (np.asarray(p, dtype=float) - self.center)

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return np.array_equal(self.quaternion, other.quaternion) and np.array_equal(
            self.center, other.center
        )


@dataclass(frozen=True, eq=False)
class FeatureEstimate:
    """A reconstructed map point with its 3x3 covariance (map units)."""

    id: int
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float)
        P = np.asarray(self.covariance, dtype=float)
        if m.shape != (3,) or not np.all(np.isfinite(m)):
            raise ValueError("feature mean must be 3 finite numbers")
        if P.shape != (3, 3):
            raise ValueError("feature covariance must be 3x3")
        if np.max(np.abs(P - P.T)) > 1e-12:
            raise ValueError("feature covariance must be symmetric")
        if np.linalg.eigvalsh(P).min() < -1e-12:
            raise ValueError("feature covariance must be positive semidefinite")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", P)

    def __eq__(self, other):
        if not isinstance(other, FeatureEstimate):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.covariance, other.covariance)
        )


@dataclass(frozen=True)
class DetectionBox:
    """Axis-aligned detector output: pixel rectangle plus class index."""

    class_id: int
    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise ValueError("detection rectangle needs u_min < u_max and v_min < v_max")

    @property
    def rect(self) -> tuple:
        return (self.u_min, self.v_min, self.u_max, self.v_max)

    def contains(self, px, margin: float = 0.0) -> bool:
        u, v = px
        return (
            self.u_min + margin < u < self.u_max - margin
            and self.v_min + margin < v < self.v_max - margin
        )


@dataclass(frozen=True)
class Frame:
    index: int
    pose: CameraPose
    intrinsics: CameraIntrinsics
    features: list = field(default_factory=list)
    detections: list = field(default_factory=list)


class Ray3(NamedTuple):
    origin: np.ndarray
    direction: np.ndarray


class Line3(NamedTuple):
    point: np.ndarray
    direction: np.ndarray


class ExtremityPair(NamedTuple):
    top: np.ndarray
    bottom: np.ndarray


@dataclass(frozen=True)
class HeightObservation:
    D: float
    sigma_D: float
    class_id: int
    frame: int
    feature_id: int

    def __post_init__(self):
        if not (self.D > 0 and self.sigma_D > 0):
            raise ValueError("height observation needs D > 0 and sigma_D > 0")


def _unit(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x)


# ---------------------------------------------------------------------------
# projection


def project(p, pose: CameraPose, K: CameraIntrinsics) -> np.ndarray:
    xc, yc, zc = pose.to_camera(p)
    if zc <= MIN_DEPTH:
        raise BehindCamera(f"point has camera depth {zc:.3g}")
    return np.array([K.fx * xc / zc + K.cx, K.fy * yc / zc + K.cy])


def back_project(px, pose: CameraPose, K: CameraIntrinsics) -> Ray3:
    u, v = px
    d_cam = _unit([(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0])
    return Ray3(pose.center.copy(), pose.rotation.T @ d_cam)


def vertical_vanishing_point(pose: CameraPose, K: CameraIntrinsics, v) -> np.ndarray:
    """Homogeneous image of the world vertical direction (may be an ideal point)."""
    return K.K @ (pose.rotation @ np.asarray(v, dtype=float))


def vertical_image_line(pi, vvp) -> np.ndarray:
    """Image line through ``pi`` whose back-projected plane contains the vertical.

    Returned as ``(a, b, c)`` with ``a*u + b*v + c = 0``, scaled so that
    ``hypot(a, b) == 1`` and the first nonzero of ``(a, b)`` is positive.
    """
    p_h = np.array([pi[0], pi[1], 1.0])
    vvp = np.asarray(vvp, dtype=float)
    line = np.cross(p_h, vvp)
    n = np.hypot(line[0], line[1])
    if n <= 1e-12 * np.linalg.norm(p_h) * np.linalg.norm(vvp):
        raise DegenerateLine("point coincides with the vertical vanishing point")
    line = line / n
    if line[0] < 0 or (line[0] == 0 and line[1] < 0):
        line = -line
    return line


def clip_line_to_rect(line, rect) -> tuple:
    """Intersections of an image line with the boundary of a rectangle.

    ``rect`` is ``(u_min, v_min, u_max, v_max)`` or a :class:`DetectionBox`.
    Returns the two end points of the clipped segment (unordered).
    """
    if isinstance(rect, DetectionBox):
        rect = rect.rect
    u_min, v_min, u_max, v_max = rect
    a, b, c = line
    # closest point to the origin plus unit direction along the line
    p0 = np.array([-a * c, -b * c])
    d = np.array([-b, a])
    t_lo, t_hi = -np.inf, np.inf
    for k, lo, hi in ((0, u_min, u_max), (1, v_min, v_max)):
        if abs(d[k]) < 1e-15:
            if not lo <= p0[k] <= hi:
                raise NoIntersection("line misses the rectangle")
            continue
        t0, t1 = sorted(((lo - p0[k]) / d[k], (hi - p0[k]) / d[k]))
        t_lo, t_hi = max(t_lo, t0), min(t_hi, t1)
    if t_lo > t_hi:
        raise NoIntersection("line misses the rectangle")
    if t_hi - t_lo < MIN_SEGMENT_PX:
        raise Tangent(f"clipped segment is only {t_hi - t_lo:.3g} px long")
    return p0 + t_lo * d, p0 + t_hi * d


def vertical_line_through(p, v) -> Line3:
    return Line3(np.asarray(p, dtype=float), np.asarray(v, dtype=float))


def ray_line_closest_point(ray: Ray3, line: Line3) -> np.ndarray:
    """Point on ``line`` closest to the (infinite) supporting line of ``ray``.

    When the two actually meet this is their intersection; for skew lines it
    is the foot of the common perpendicular on ``line``.
    """
    u = _unit(line.direction)
    w = _unit(ray.direction)
    b = float(u @ w)
    if abs(b) >= 1.0 - 1e-9:
        raise ParallelLines("ray is parallel to the vertical line")
    r = line.point - ray.origin
    t = (b * float(w @ r) - float(u @ r)) / (1.0 - b * b)
    return line.point + t * u


# ---------------------------------------------------------------------------
# height measurement


def object_extremities(
    feat: FeatureEstimate,
    det: DetectionBox,
    pose: CameraPose,
    K: CameraIntrinsics,
    v,
    margin: float = DEFAULT_MARGIN_PX,
) -> ExtremityPair:
    """Top and bottom of the detected object on the vertical through ``feat``."""
    pi = project(feat.mean, pose, K)
    if not det.contains(pi, margin):
        raise FeatureOutsideBox(f"feature {feat.id} projects to {pi} outside {det.rect}")
    lam = vertical_image_line(pi, vertical_vanishing_point(pose, K, v))
    a, b = clip_line_to_rect(lam, det)
    Lam = vertical_line_through(feat.mean, v)
    p1 = ray_line_closest_point(back_project(a, pose, K), Lam)
    p2 = ray_line_closest_point(back_project(b, pose, K), Lam)
    # ordering in 3D: image ordering flips under camera roll
    if (p1 - p2) @ np.asarray(v, dtype=float) >= 0:
        return ExtremityPair(p1, p2)
    return ExtremityPair(p2, p1)


def dimensionless_height(pair: ExtremityPair) -> float:
    D = float(np.linalg.norm(pair.top - pair.bottom))
    if D < 1e-12:
        raise ZeroHeight("extremities coincide")
    return D


def height_jacobian(pair: ExtremityPair) -> np.ndarray:
    """Gradient of ``|top - bottom|`` with respect to ``top`` (a unit vector)."""
    return (pair.top - pair.bottom) / dimensionless_height(pair)


def height_sigma(pair: ExtremityPair, P) -> float:
    """Standard deviation of ``D`` when both extremities carry covariance ``P``.

    First-order propagation with independent, identical errors on the two
    end points: ``var = 2 J P J^T`` with ``J`` the unit gradient.
    """
    J = height_jacobian(pair)
    q = float(J @ np.asarray(P, dtype=float) @ J)
    if q < -1e-12:
        raise NonPositiveVariance(f"J P J^T = {q:.3g}")
    return float(np.sqrt(2.0 * max(q, 0.0)))


def make_observation(
    feat: FeatureEstimate,
    det: DetectionBox,
    pose: CameraPose,
    K: CameraIntrinsics,
    v,
    frame: int = 0,
    sigma_min: float = DEFAULT_SIGMA_MIN,
    margin: float = DEFAULT_MARGIN_PX,
) -> HeightObservation:
    pair = object_extremities(feat, det, pose, K, v, margin)
    D = dimensionless_height(pair)
    sigma = height_sigma(pair, feat.covariance)
    return HeightObservation(D, max(sigma, sigma_min), det.class_id, frame, feat.id)
