import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genflow.errors import EmptyInputError, InvalidDepthError, ParameterError
from genflow.geometry import (CameraModel, PointCloud, SE3Transform, back_project, cloud_from_json,
                              cloud_to_json, crop_cube, farthest_point_sample, project, read_ply,
                              rotation_about_axis, se3_apply, voxel_downsample, write_ply)

finite = st.floats(-2.0, 2.0, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


@st.composite
def transforms(draw):
    axis = draw(vec3)
    if np.linalg.norm(axis) < 1e-3:
        axis = np.array([0.0, 0.0, 1.0])
    angle = draw(st.floats(-np.pi, np.pi))
    return SE3Transform(rotation_about_axis(axis, angle), draw(vec3))


def test_identity_apply():
    np.testing.assert_array_equal(se3_apply(SE3Transform.identity(), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_pure_translation():
    t = SE3Transform.from_translation([0.1, 0.0, 0.0])
    np.testing.assert_array_equal(se3_apply(t, [0.0, 0.0, 0.0]), [0.1, 0.0, 0.0])


def test_quarter_turn_about_z():
    Rz = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    out = se3_apply(SE3Transform(Rz, np.zeros(3)), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(out, [0.0, 1.0, 0.0], atol=1e-12)
    out = se3_apply(SE3Transform.from_axis_angle([0, 0, 1], np.pi / 2), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(out, [0.0, 1.0, 0.0], atol=1e-12)


def test_rejects_reflection_and_non_orthonormal():
    with pytest.raises(ParameterError):
        SE3Transform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ParameterError):
        SE3Transform(np.diag([1.0, 1.0, 1.1]), np.zeros(3))


@settings(max_examples=100, deadline=None)
@given(transforms(), transforms(), vec3)
def test_compose_matches_sequential_application(a, b, p):
    np.testing.assert_allclose(se3_apply(a @ b, p), se3_apply(a, se3_apply(b, p)), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(transforms(), vec3)
def test_inverse_round_trip(t, p):
    np.testing.assert_allclose(se3_apply(t.inverse(), se3_apply(t, p)), p, atol=1e-9)


CAM = CameraModel(500.0, 480.0, 320.0, 240.0)


def test_principal_ray():
    np.testing.assert_allclose(back_project((320.0, 240.0), 1.0, CAM), [0.0, 0.0, 1.0])


def test_back_project_by_hand():
    np.testing.assert_allclose(back_project((320.0 + 500.0, 240.0), 2.0, CAM), [2.0, 0.0, 2.0])


def test_non_positive_depth():
    with pytest.raises(InvalidDepthError):
        back_project((10.0, 10.0), 0.0, CAM)
    with pytest.raises(InvalidDepthError):
        back_project((10.0, 10.0), -1.0, CAM)


@settings(max_examples=100, deadline=None)
@given(transforms(), vec3)
def test_back_project_inverts_projection(extrinsic, p_cam):
    p_cam = p_cam.copy()
    p_cam[2] = abs(p_cam[2]) + 0.1
    cam = CameraModel(600.0, 610.0, 300.0, 200.0, extrinsic)
    world = se3_apply(extrinsic, p_cam)
    u, v, z = project(world, cam)
    np.testing.assert_allclose(back_project((u, v), z, cam), world, atol=1e-9)


def test_voxel_examples():
    far = PointCloud([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    assert len(voxel_downsample(far, 0.02)) == 2
    same = voxel_downsample(PointCloud([[0.3, 0.3, 0.3], [0.3, 0.3, 0.3]]), 0.02)
    assert len(same) == 1
    np.testing.assert_allclose(same.positions[0], [0.3, 0.3, 0.3])
    one = voxel_downsample(PointCloud([[0.0, 0.0, 0.0], [0.005, 0.0, 0.0]]), 0.02)
    np.testing.assert_allclose(one.positions, [[0.0025, 0.0, 0.0]])


def test_voxel_colors_are_averaged():
    c = PointCloud([[0.0, 0.0, 0.0], [0.001, 0.0, 0.0]], [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_allclose(voxel_downsample(c, 0.02).colors, [[0.5, 0.0, 0.5]])


def test_voxel_rejects_bad_size():
    with pytest.raises(ParameterError):
        voxel_downsample(PointCloud([[0.0, 0.0, 0.0]]), 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.5))
def test_voxel_outputs_stay_in_their_cells(seed, voxel):
    pts = np.random.default_rng(seed).uniform(-1, 1, size=(200, 3))
    out = voxel_downsample(PointCloud(pts), voxel)
    assert len(out) <= len(pts)
    cells_in = {tuple(c) for c in np.floor(pts / voxel).astype(int)}
    # small slack for centroids of points sitting exactly on a cell face
    lo = np.floor(out.positions / voxel + 1e-9).astype(int)
    assert {tuple(c) for c in lo} <= cells_in
    assert len(out) == len(cells_in)


def test_fps_square_diagonal():
    sq = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
    # exhaustive: the pairs maximizing separation are exactly the diagonals
    best = max(np.linalg.norm(sq[i] - sq[j]) for i, j in itertools.combinations(range(4), 2))
    diagonals = {frozenset(p) for p in itertools.combinations(range(4), 2)
                 if np.isclose(np.linalg.norm(sq[p[0]] - sq[p[1]]), best)}
    assert diagonals == {frozenset({0, 2}), frozenset({1, 3})}
    for seed in range(20):
        assert frozenset(farthest_point_sample(PointCloud(sq), 2, seed).tolist()) in diagonals


def test_fps_all_indices_when_budget_exceeds_size():
    pts = np.random.default_rng(0).normal(size=(7, 3))
    idx = farthest_point_sample(PointCloud(pts), 50, seed=3)
    assert sorted(idx.tolist()) == list(range(7))


def test_fps_deterministic():
    pts = np.random.default_rng(1).normal(size=(100, 3))
    a = farthest_point_sample(pts, 10, seed=5)
    b = farthest_point_sample(pts, 10, seed=5)
    np.testing.assert_array_equal(a, b)


def test_fps_empty():
    with pytest.raises(EmptyInputError):
        farthest_point_sample(PointCloud(np.zeros((0, 3))), 3)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 10), st.integers(1, 10))
def test_fps_greedy_choice_is_optimal_at_every_step(seed, n_points, n):
    pts = np.random.default_rng(seed).uniform(size=(n_points, 3))
    idx = farthest_point_sample(pts, n, seed)
    assert len(set(idx.tolist())) == len(idx) == min(n, n_points)
    for k in range(1, len(idx)):
        chosen = idx[:k]
        # brute force over every unchosen candidate
        score = {c: min(np.linalg.norm(pts[c] - pts[s]) for s in chosen)
                 for c in range(n_points) if c not in chosen}
        best = max(score.values())
        assert score[idx[k]] == pytest.approx(best, abs=1e-12)
        assert idx[k] == min(c for c, v in score.items() if abs(v - best) <= 1e-12)


def test_crop_bounds():
    cloud = PointCloud([[0.39, 0.0, 0.0], [0.41, 0.0, 0.0], [0.4, 0.0, 0.0]])
    kept = crop_cube(cloud, [0.0, 0.0, 0.0], 0.8)
    np.testing.assert_array_equal(kept.positions, [[0.39, 0.0, 0.0], [0.4, 0.0, 0.0]])
    assert len(crop_cube(cloud, [0.0, 0.0, 0.0], 1e6)) == 3


def test_ply_round_trip_is_bit_stable(tmp_path):
    rng = np.random.default_rng(2)
    cloud = PointCloud(rng.normal(size=(30, 3)), rng.integers(0, 256, size=(30, 3)) / 255.0)
    write_ply(cloud, tmp_path / "a.ply")
    back = read_ply(tmp_path / "a.ply")
    np.testing.assert_array_equal(back.positions, cloud.positions)
    np.testing.assert_array_equal(back.colors, cloud.colors)
    write_ply(back, tmp_path / "b.ply")
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


def test_ply_without_colors(tmp_path):
    cloud = PointCloud(np.arange(12, dtype=float).reshape(4, 3) / 7.0)
    write_ply(cloud, tmp_path / "p.ply")
    back = read_ply(tmp_path / "p.ply")
    assert back.colors is None
    np.testing.assert_array_equal(back.positions, cloud.positions)


def test_json_round_trip():
    rng = np.random.default_rng(3)
    cloud = PointCloud(rng.normal(size=(5, 3)), rng.uniform(size=(5, 3)))
    back = cloud_from_json(cloud_to_json(cloud))
    np.testing.assert_array_equal(back.positions, cloud.positions)
    np.testing.assert_array_equal(back.colors, cloud.colors)


def test_cloud_validation():
    with pytest.raises(ParameterError):
        PointCloud([[0.0, 0.0, np.nan]])
    with pytest.raises(ParameterError):
        PointCloud([[0.0, 0.0, 0.0]], [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
