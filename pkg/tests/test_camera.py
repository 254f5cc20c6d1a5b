import math

import numpy as np
import pytest

from stereoattn.camera import (RAW, Camera, Extrinsics, Intrinsics, NormalizationPolicy, StereoRig,
                               TrajectoryConfig, disparity_from_depth, endpoint_motion,
                               projective_from_matrices, projective_matrix, relative_transform,
                               rotation_y, sample_trajectory, trajectory_from_json, trajectory_to_json)
from stereoattn.kernels import make_rng


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def random_rigid(rng):
    T = np.eye(4)
    T[:3, :3] = random_rotation(rng)
    T[:3, 3] = rng.uniform(-5, 5, 3)
    return T


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        Intrinsics(0.0, 1.0, 0.0, 0.0, 4, 4)
    with pytest.raises(ValueError):
        Intrinsics(1.0, 1.0, 4.0, 0.0, 4, 4)


def test_extrinsics_validation():
    with pytest.raises(ValueError):
        Extrinsics(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        Extrinsics(2 * np.eye(3), np.zeros(3))


def test_projective_matrix_identity_camera():
    assert np.array_equal(projective_from_matrices(np.eye(3), np.eye(4)), np.eye(4))
    cam = Camera(Intrinsics(1.0, 1.0, 0.0, 0.0, 4, 4), Extrinsics())
    assert np.array_equal(projective_matrix(cam, RAW), np.eye(4))


def test_projective_matrix_block_embedding():
    P = projective_from_matrices(np.diag([2.0, 2.0, 1.0]), np.eye(4))
    assert np.array_equal(P, np.diag([2.0, 2.0, 1.0, 1.0]))
    with pytest.raises(np.linalg.LinAlgError):
        projective_from_matrices(np.zeros((3, 3)), np.eye(4))


def test_normalization_policy():
    cam = Camera(Intrinsics(320.0, 240.0, 320.0, 240.0, 640, 480), Extrinsics(np.eye(3), [0.0, 0.0, 10.0]))
    P = projective_matrix(cam, NormalizationPolicy(scene_scale=20.0))
    expected_K = np.array([[0.5, 0, 0.0], [0, 0.5, 0.0], [0, 0, 1]])
    np.testing.assert_allclose(P[:3, :3], expected_K)
    np.testing.assert_allclose(P[:3, 3], expected_K @ [0, 0, 0.5])


def test_rectified_rig_relative_translation():
    intr = Intrinsics(1.0, 1.0, 0.0, 0.0, 8, 8)
    rig = StereoRig.rectified(intr, Extrinsics(), 0.3)
    Pl = projective_from_matrices(np.eye(3), rig.left.extrinsics.matrix())
    Pr = projective_from_matrices(np.eye(3), rig.right.extrinsics.matrix())
    rel = Pl @ np.linalg.inv(Pr)
    # oracle: right camera center is (b, 0, 0); mapping right-camera coords back to left adds +b in x
    expected = np.eye(4)
    expected[0, 3] = 0.3
    np.testing.assert_allclose(rel, expected, atol=1e-12)
    np.testing.assert_allclose(rig.right.extrinsics.center, [0.3, 0, 0])


def test_rig_validation():
    intr = Intrinsics(1.0, 1.0, 0.0, 0.0, 8, 8)
    with pytest.raises(ValueError):
        StereoRig.rectified(intr, Extrinsics(), 0.0)
    left = Camera(intr, Extrinsics())
    with pytest.raises(ValueError):
        StereoRig(left, Camera(intr, Extrinsics(np.eye(3), [0.0, -0.1, 0.0])), 0.1)


def test_relative_transform_variants():
    rng = make_rng(5)
    P = random_rigid(rng) @ np.diag([2.0, 1.0, 3.0, 1.0])
    np.testing.assert_allclose(relative_transform(P, P, "inverse"), np.eye(4), atol=1e-12)
    Rot = np.eye(4)
    Rot[:3, :3] = random_rotation(rng)
    np.testing.assert_allclose(relative_transform(Rot, Rot, "inverse"), relative_transform(Rot, Rot, "transpose"),
                               atol=1e-12)
    with pytest.raises(np.linalg.LinAlgError):
        relative_transform(P, np.zeros((4, 4)), "inverse")
    with pytest.raises(ValueError):
        relative_transform(P, P, "other")


def test_relative_transform_matches_rigid_composition():
    rng = make_rng(6)
    for _ in range(20):
        R1, R2 = random_rotation(rng), random_rotation(rng)
        t1, t2 = rng.uniform(-3, 3, 3), rng.uniform(-3, 3, 3)
        T1, T2 = Extrinsics(R1, t1).matrix(), Extrinsics(R2, t2).matrix()
        # camera-2 coords -> world -> camera-1 coords, composed by hand
        R = R1 @ R2.T
        t = t1 - R1 @ R2.T @ t2
        expected = np.eye(4)
        expected[:3, :3], expected[:3, 3] = R, t
        np.testing.assert_allclose(relative_transform(T1, T2, "inverse"), expected, atol=1e-12)


def test_world_frame_invariance_inverse_variant():
    rng = make_rng(7)
    for _ in range(50):
        K1 = np.array([[rng.uniform(0.5, 2), 0, rng.uniform(-0.5, 0.5)],
                       [0, rng.uniform(0.5, 2), rng.uniform(-0.5, 0.5)], [0, 0, 1]])
        K2 = np.array([[rng.uniform(0.5, 2), 0, 0.1], [0, rng.uniform(0.5, 2), -0.2], [0, 0, 1]])
        T1, T2 = random_rigid(rng), random_rigid(rng)
        G = rng.standard_normal((4, 4)) + 3 * np.eye(4)
        base = relative_transform(projective_from_matrices(K1, T1), projective_from_matrices(K2, T2))
        moved = relative_transform(projective_from_matrices(K1, T1 @ G), projective_from_matrices(K2, T2 @ G))
        np.testing.assert_allclose(moved, base, rtol=1e-9, atol=1e-9)
        # holds with translation rescaling too
        b2 = relative_transform(projective_from_matrices(K1, T1, 20.0), projective_from_matrices(K2, T2, 20.0))
        m2 = relative_transform(projective_from_matrices(K1, T1 @ G, 20.0), projective_from_matrices(K2, T2 @ G, 20.0))
        np.testing.assert_allclose(m2, b2, rtol=1e-9, atol=1e-9)


def test_disparity_from_depth():
    intr = Intrinsics(100.0, 100.0, 50.0, 50.0, 100, 100)
    rig = StereoRig.rectified(intr, Extrinsics(), 0.25)
    assert disparity_from_depth(25.0, rig) == pytest.approx(1.0)
    assert disparity_from_depth(1e12, rig) < 1e-9
    rig2 = StereoRig.rectified(Intrinsics(320.0, 320.0, 320.0, 240.0, 640, 480), Extrinsics(), 0.063)
    assert disparity_from_depth(2.016, rig2) == pytest.approx(10.0, rel=1e-12)
    z = np.linspace(0.5, 50, 100)
    assert np.all(np.diff(disparity_from_depth(z, rig)) < 0)
    with pytest.raises(ValueError):
        disparity_from_depth(0.0, rig)


def test_sample_trajectory_protocol():
    t = sample_trajectory(make_rng(1), 49)
    assert len(t) == 49
    dz, yaw = endpoint_motion(t)
    assert 4.0 <= abs(dz) <= 20.0
    assert 50.0 <= abs(yaw) <= 150.0
    assert np.allclose(t.frames[0].extrinsics.matrix(), np.eye(4))
    with pytest.raises(ValueError):
        sample_trajectory(make_rng(1), 1)


def test_sample_trajectory_interpolates_linearly():
    t = sample_trajectory(make_rng(9), 5)
    dz, yaw = endpoint_motion(t)
    for i, cam in enumerate(t.frames):
        s = i / 4
        np.testing.assert_allclose(cam.extrinsics.center, [0, 0, s * dz], atol=1e-12)
        np.testing.assert_allclose(cam.extrinsics.R, rotation_y(math.radians(s * yaw)).T, atol=1e-12)


def test_sample_trajectory_endpoint_statistics():
    zs, yaws = [], []
    for seed in range(2000):
        dz, yaw = endpoint_motion(sample_trajectory(make_rng(seed), 2))
        zs.append(dz)
        yaws.append(yaw)
    zs, yaws = np.abs(zs), np.array(yaws)
    assert zs.min() >= 4.0 and zs.max() <= 20.0
    assert np.abs(yaws).min() >= 50.0 and np.abs(yaws).max() <= 150.0
    assert (np.array(yaws) > 0).any() and (np.array(yaws) < 0).any()


def test_trajectory_json_roundtrip():
    t = sample_trajectory(make_rng(3), 6, TrajectoryConfig())
    text = trajectory_to_json(t, 0.063)
    back, b = trajectory_from_json(text)
    assert b == 0.063
    assert trajectory_to_json(back, b) == text
    for c1, c2 in zip(t.frames, back.frames):
        assert np.array_equal(c1.extrinsics.matrix(), c2.extrinsics.matrix())
        assert c1.intrinsics == c2.intrinsics
