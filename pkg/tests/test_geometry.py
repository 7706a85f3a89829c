import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalesense import geometry as g
from scalesense.errors import (
    BehindCamera,
    DegenerateLine,
    FeatureOutsideBox,
    NoIntersection,
    NonPositiveVariance,
    ParallelLines,
    Tangent,
    ZeroHeight,
)
from scalesense.simulator import ObjectSpec, SceneConfig, generate_scene, render_frame

from helpers import random_pose


def _rx(deg):
    a = math.radians(deg)
    return np.array([[1, 0, 0], [0, math.cos(a), -math.sin(a)], [0, math.sin(a), math.cos(a)]])


def _point_ray_distance(p, ray):
    r = p - ray.origin
    return np.linalg.norm(r - (r @ ray.direction) * ray.direction)


# --- rotations -------------------------------------------------------------


def test_quaternion_matrix_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        q = -q if q[0] < 0 else q
        R = g.quat_to_matrix(q)
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)
        assert np.allclose(g.matrix_to_quat(R), q, atol=1e-12)


def test_pose_rejects_non_rotation():
    with pytest.raises(ValueError):
        g.CameraPose.from_matrix(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        g.CameraPose(np.array([2.0, 0, 0, 0]), np.zeros(3))


# --- projection ------------------------------------------------------------


def test_project_optical_axis(identity_pose, K1):
    assert np.allclose(g.project([0, 0, 1], identity_pose, K1), [0, 0])


def test_project_pinhole_formula(identity_pose, K500):
    # 500 * 1/2 + 320 = 570
    assert np.allclose(g.project([1, 0, 2], identity_pose, K500), [570, 240])


def test_project_behind_camera(identity_pose, K500):
    with pytest.raises(BehindCamera):
        g.project([0, 0, -1], identity_pose, K500)


def test_back_project_principal_point(identity_pose, K1):
    ray = g.back_project([0, 0], identity_pose, K1)
    assert np.allclose(ray.origin, 0)
    assert np.allclose(ray.direction, [0, 0, 1])


def test_back_project_inverts_example(identity_pose, K500):
    ray = g.back_project([570, 240], identity_pose, K500)
    assert _point_ray_distance(np.array([1.0, 0, 2]), ray) < 1e-9


def test_back_project_round_trip_random(K500):
    rng = np.random.default_rng(1)
    for _ in range(100):
        pose = random_pose(rng)
        p = pose.center + pose.rotation.T @ np.array([*rng.uniform(-1, 1, 2), rng.uniform(0.5, 5)])
        ray = g.back_project(g.project(p, pose, K500), pose, K500)
        assert abs(np.linalg.norm(ray.direction) - 1) < 1e-12
        assert _point_ray_distance(p, ray) < 1e-9


# --- vanishing point and image line -----------------------------------------


def test_vvp_ideal_point(identity_pose, K500):
    vvp = g.vertical_vanishing_point(identity_pose, K500, [0, 1, 0])
    assert np.allclose(vvp, [0, 500, 0])


def test_vvp_at_principal_point(K500):
    # camera looking straight along the vertical
    pose = g.CameraPose.from_matrix(_rx(90), np.zeros(3))
    vvp = g.vertical_vanishing_point(pose, K500, [0, 1, 0])
    assert np.allclose(vvp / vvp[2], [320, 240, 1])


def test_vvp_tilted_45(K1):
    pose = g.CameraPose.from_matrix(_rx(45), np.zeros(3))
    vvp = g.vertical_vanishing_point(pose, K1, [0, 1, 0])
    assert np.allclose(vvp / vvp[1], [0, 1, 1])


def test_vertical_line_ideal_vvp():
    line = g.vertical_image_line([5, 7], [0, 1, 0])
    assert np.allclose(line, [1, 0, -5])


def test_vertical_line_cross_product():
    line = g.vertical_image_line([0, 0], [1, 1, 1])
    assert np.allclose(line, np.array([1, -1, 0]) / math.sqrt(2))


def test_vertical_line_degenerate():
    with pytest.raises(DegenerateLine):
        g.vertical_image_line([3, 4], [6, 8, 2])


def test_vertical_line_plane_contains_vertical(K500):
    rng = np.random.default_rng(2)
    v = np.array([0.0, 0.0, 1.0])
    for _ in range(50):
        pose = random_pose(rng)
        pi = rng.uniform([0, 0], [640, 480])
        line = g.vertical_image_line(pi, g.vertical_vanishing_point(pose, K500, v))
        assert abs(line @ [pi[0], pi[1], 1.0]) < 1e-9
        normal = pose.rotation.T @ (K500.K.T @ line)
        assert abs(normal @ v) / np.linalg.norm(normal) < 1e-9


# --- clipping ----------------------------------------------------------------


def _clip_set(line, rect):
    a, b = g.clip_line_to_rect(line, rect)
    return sorted([tuple(np.round(a, 9)), tuple(np.round(b, 9))])


def test_clip_axis_aligned():
    assert _clip_set([1, 0, -5], (0, 0, 10, 20)) == [(5, 0), (5, 20)]


def test_clip_diagonal():
    line = np.array([1, -1, 0]) / math.sqrt(2)
    assert _clip_set(line, (0, 0, 10, 5)) == [(0, 0), (5, 5)]


def test_clip_miss():
    with pytest.raises(NoIntersection):
        g.clip_line_to_rect([1, 0, -15], (0, 0, 10, 20))


def test_clip_corner_is_tangent():
    line = np.array([1, 1, -20]) / math.sqrt(2)  # touches (10, 10) only
    with pytest.raises(Tangent):
        g.clip_line_to_rect(line, (0, 0, 10, 10))


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0, 2 * math.pi),
    st.floats(-5, 15),
    st.floats(-5, 25),
)
def test_clip_points_lie_on_boundary_and_line(angle, u0, v0):
    rect = (0.0, 0.0, 10.0, 20.0)
    a, b = math.cos(angle), math.sin(angle)
    line = np.array([a, b, -(a * u0 + b * v0)])
    try:
        pts = g.clip_line_to_rect(line, rect)
    except (NoIntersection, Tangent):
        return
    for u, v in pts:
        assert abs(line @ [u, v, 1]) < 1e-9
        on_edge = min(abs(u - 0), abs(u - 10), abs(v - 0), abs(v - 20))
        assert on_edge < 1e-9
        assert -1e-9 <= u <= 10 + 1e-9 and -1e-9 <= v <= 20 + 1e-9


# --- 3D lines --------------------------------------------------------------


def test_vertical_line_through():
    line = g.vertical_line_through([1, 2, 3], [0, 1, 0])
    assert np.array_equal(line.point, [1, 2, 3])
    assert np.array_equal(line.direction, [0, 1, 0])


def _grid_search_on_line(ray, line, span=10.0, n=200001):
    # brute force: distance from points on the line to the infinite ray line
    t = np.linspace(-span, span, n)
    pts = line.point[None, :] + t[:, None] * line.direction[None, :]
    r = pts - ray.origin
    proj = r @ ray.direction
    dist = np.linalg.norm(r - proj[:, None] * ray.direction[None, :], axis=1)
    return pts[np.argmin(dist)]


@pytest.mark.parametrize(
    "line, expected",
    [
        (g.Line3(np.array([1.0, 0, 5]), np.array([0.0, 1, 0])), [1, 0, 5]),
        (g.Line3(np.array([0.0, 1, 5]), np.array([1.0, 0, 0])), [0, 1, 5]),
    ],
)
def test_closest_point_examples(line, expected):
    ray = g.Ray3(np.zeros(3), np.array([0.0, 0, 1]))
    oracle = _grid_search_on_line(ray, line)
    assert np.allclose(oracle, expected, atol=1e-4)
    assert np.allclose(g.ray_line_closest_point(ray, line), expected, atol=1e-12)


def test_closest_point_random_against_grid_search():
    rng = np.random.default_rng(3)
    for _ in range(10):
        ray = g.Ray3(rng.normal(size=3), g._unit(rng.normal(size=3)))
        line = g.Line3(rng.normal(size=3), g._unit(rng.normal(size=3)))
        oracle = _grid_search_on_line(ray, line, span=20.0, n=400001)
        assert np.allclose(g.ray_line_closest_point(ray, line), oracle, atol=2e-4)


def test_closest_point_exact_intersection():
    rng = np.random.default_rng(4)
    for _ in range(20):
        line = g.Line3(rng.normal(size=3), g._unit(rng.normal(size=3)))
        q = line.point + rng.normal() * line.direction
        origin = rng.normal(size=3) * 3
        ray = g.Ray3(origin, g._unit(q - origin))
        assert np.allclose(g.ray_line_closest_point(ray, line), q, atol=1e-9)


def test_closest_point_ignores_ray_sign():
    rng = np.random.default_rng(5)
    for _ in range(20):
        ray = g.Ray3(rng.normal(size=3), g._unit(rng.normal(size=3)))
        line = g.Line3(rng.normal(size=3), g._unit(rng.normal(size=3)))
        flipped = g.Ray3(ray.origin, -ray.direction)
        assert np.allclose(g.ray_line_closest_point(ray, line), g.ray_line_closest_point(flipped, line), atol=1e-12)


def test_closest_point_parallel():
    ray = g.Ray3(np.zeros(3), np.array([0.0, 1, 0]))
    with pytest.raises(ParallelLines):
        g.ray_line_closest_point(ray, g.Line3(np.array([1.0, 0, 0]), np.array([0.0, -1, 0])))


# --- height measurement ----------------------------------------------------


@pytest.fixture(scope="module")
def half_metre_scene():
    cfg = SceneConfig(objects=(ObjectSpec(0, 0.5, 0.0),), d_star=2.0, n_frames=20)
    return generate_scene(cfg, seed=11)


def test_extremities_noiseless_height(half_metre_scene):
    scene = half_metre_scene
    n = 0
    for k in range(len(scene.trajectory)):
        frame = render_frame(scene, k)
        for det in frame.detections:
            for f in frame.features:
                pair = g.object_extremities(f, det, frame.pose, frame.intrinsics, scene.v)
                assert g.dimensionless_height(pair) == pytest.approx(0.25, abs=1e-9)
                assert (pair.top - pair.bottom) @ scene.v > 0
                n += 1
    assert n > 50


def test_extremities_feature_outside_box(half_metre_scene):
    frame = render_frame(half_metre_scene, 0)
    det = frame.detections[0]
    far = g.DetectionBox(0, det.u_max + 10, det.v_min, det.u_max + 40, det.v_max)
    with pytest.raises(FeatureOutsideBox):
        g.object_extremities(frame.features[0], far, frame.pose, frame.intrinsics, half_metre_scene.v)


def test_extremities_ordering_is_three_dimensional(monkeypatch, half_metre_scene):
    frame = render_frame(half_metre_scene, 0)
    det, feat = frame.detections[0], frame.features[0]
    v = half_metre_scene.v
    ref = g.object_extremities(feat, det, frame.pose, frame.intrinsics, v)
    clip = g.clip_line_to_rect
    monkeypatch.setattr(g, "clip_line_to_rect", lambda line, rect: clip(line, rect)[::-1])
    swapped = g.object_extremities(feat, det, frame.pose, frame.intrinsics, v)
    assert np.array_equal(ref.top, swapped.top) and np.array_equal(ref.bottom, swapped.bottom)


def test_dimensionless_height_examples():
    assert g.dimensionless_height(g.ExtremityPair(np.array([0.0, 1, 0]), np.zeros(3))) == 1.0
    assert g.dimensionless_height(g.ExtremityPair(np.array([1.0, 2, 2]), np.array([1.0, 0, 0]))) == pytest.approx(
        math.sqrt(8)
    )
    with pytest.raises(ZeroHeight):
        g.dimensionless_height(g.ExtremityPair(np.ones(3), np.ones(3)))


def test_height_sigma_isotropic():
    rng = np.random.default_rng(6)
    for _ in range(20):
        pair = g.ExtremityPair(rng.normal(size=3), rng.normal(size=3))
        s = rng.uniform(0.01, 1)
        assert g.height_sigma(pair, s**2 * np.eye(3)) == pytest.approx(s * math.sqrt(2), rel=1e-12)


def test_height_sigma_zero_covariance():
    pair = g.ExtremityPair(np.array([0.0, 0, 1]), np.zeros(3))
    assert g.height_sigma(pair, np.zeros((3, 3))) == 0.0


def test_height_sigma_axis_covariance_and_monte_carlo():
    D = 0.7
    pair = g.ExtremityPair(np.array([D, 0, 0]), np.zeros(3))
    P = np.diag([0.01, 0.0, 0.0])
    assert g.height_sigma(pair, P) == pytest.approx(math.sqrt(0.02), rel=1e-12)
    # Monte Carlo: perturb both ends independently with N(0, P). The
    # linearization is exact here because the noise is along the segment.
    rng = np.random.default_rng(7)
    n = 10**6
    top = pair.top + rng.multivariate_normal(np.zeros(3), P, size=n)
    bot = pair.bottom + rng.multivariate_normal(np.zeros(3), P, size=n)
    signed = (top - bot)[:, 0]
    assert np.std(signed) == pytest.approx(math.sqrt(0.02), rel=0.05)


def test_height_sigma_rejects_negative_variance():
    pair = g.ExtremityPair(np.array([0.0, 0, 1]), np.zeros(3))
    with pytest.raises(NonPositiveVariance):
        g.height_sigma(pair, np.diag([0.0, 0.0, -1e-6]))


def test_jacobian_unit_norm_and_finite_differences():
    rng = np.random.default_rng(8)
    h = 1e-6
    for _ in range(20):
        pair = g.ExtremityPair(rng.normal(size=3), rng.normal(size=3))
        J = g.height_jacobian(pair)
        assert abs(np.linalg.norm(J) - 1.0) < 1e-12
        fd = np.array([
            (np.linalg.norm(pair.top + h * e - pair.bottom) - np.linalg.norm(pair.top - h * e - pair.bottom)) / (2 * h)
            for e in np.eye(3)
        ])
        assert np.allclose(J, fd, atol=1e-8)


def test_make_observation_noiseless(half_metre_scene):
    frame = render_frame(half_metre_scene, 3)
    obs = g.make_observation(frame.features[0], frame.detections[0], frame.pose, frame.intrinsics,
                             half_metre_scene.v, frame=3)
    assert obs.D == pytest.approx(0.25, abs=1e-9)
    assert obs.class_id == 0 and obs.frame == 3 and obs.feature_id == frame.features[0].id
    # zero covariance -> floor
    assert obs.sigma_D == g.DEFAULT_SIGMA_MIN


def test_make_observation_sigma_floor_configurable(half_metre_scene):
    frame = render_frame(half_metre_scene, 3)
    obs = g.make_observation(frame.features[0], frame.detections[0], frame.pose, frame.intrinsics,
                             half_metre_scene.v, sigma_min=0.01)
    assert obs.sigma_D == 0.01


def test_make_observation_feature_on_vanishing_point(identity_pose, K500):
    feat = g.FeatureEstimate(1, np.array([0.0, 0.0, 1.0]), np.eye(3) * 1e-4)
    det = g.DetectionBox(0, 300.0, 220.0, 340.0, 260.0)
    with pytest.raises(DegenerateLine):
        # camera looks straight along the vertical; feature projects onto the vanishing point
        g.make_observation(feat, det, identity_pose, K500, [0, 0, 1])
