import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stereoattn.camera import (Extrinsics, Intrinsics, NormalizationPolicy, StereoRig, projective_from_matrices,
                               projective_matrix, relative_transform)
from stereoattn.kernels import make_rng
from stereoattn.rope import (RopeConfig, TokenPosition, camera_block, default_partition, rope_1d, rope_3d,
                             rope_frequencies, unified_apply, unified_logit)


def rigid(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    T = np.eye(4)
    T[:3, :3], T[:3, 3] = q, rng.uniform(-1, 1, 3)
    return T


def random_P(rng, T=None):
    K = np.array([[rng.uniform(0.5, 1.5), 0, rng.uniform(-0.3, 0.3)],
                  [0, rng.uniform(0.5, 1.5), rng.uniform(-0.3, 0.3)], [0, 0, 1]])
    return projective_from_matrices(K, rigid(rng) if T is None else T)


def test_config_validation():
    with pytest.raises(ValueError):
        RopeConfig(d=7)
    with pytest.raises(ValueError):
        RopeConfig(d=8, d_c=6)
    with pytest.raises(ValueError):
        RopeConfig(d=8, partition=(4, 2, 4))
    with pytest.raises(ValueError):
        RopeConfig(d=8, variant="x")
    assert RopeConfig(d=32).partition == (12, 10, 10)
    assert RopeConfig(d=64).partition == (24, 20, 20)
    assert default_partition(128) == (44, 42, 42)


def test_config_json_roundtrip():
    cfg = RopeConfig(d=16, d_c=8, variant="transpose", enabled_axes=("t", "x"))
    import json
    assert RopeConfig.from_dict(json.loads(cfg.to_json())) == cfg
    with pytest.raises(ValueError):
        RopeConfig.from_dict({"d": 8, "bogus": 1})


def test_rope_1d_examples():
    v = make_rng(0).standard_normal(8)
    assert np.array_equal(rope_1d(v, 0), v)
    out = rope_1d(np.array([1.0, 0.0]), 1, theta=np.array([math.pi / 2]))
    np.testing.assert_allclose(out, [0.0, 1.0], atol=1e-15)
    with pytest.raises(ValueError):
        rope_1d(np.ones(3), 1)


def test_rope_1d_relative_and_norm_preserving():
    rng = make_rng(1)
    for _ in range(100):
        q, k = rng.standard_normal(16), rng.standard_normal(16)
        t1, t2, s = rng.integers(0, 50, 3)
        lhs = rope_1d(q, t1) @ rope_1d(k, t2)
        rhs = rope_1d(q, t1 + s) @ rope_1d(k, t2 + s)
        assert abs(lhs - rhs) < 1e-9
        assert np.linalg.norm(rope_1d(q, t1)) == pytest.approx(np.linalg.norm(q), rel=1e-12)


def test_frequencies():
    np.testing.assert_allclose(rope_frequencies(4, 10000.0), [1.0, 0.01])


def test_rope_3d_identity_and_zero_delta():
    cfg = RopeConfig(d=12)
    rng = make_rng(2)
    q, k = rng.standard_normal(12), rng.standard_normal(12)
    assert np.array_equal(rope_3d(q, 0, 0, 0, cfg), q)
    a = rope_3d(q, 3, 1, 2, cfg) @ rope_3d(k, 3, 1, 2, cfg)
    assert a == pytest.approx(q @ k, rel=1e-12)
    with pytest.raises(ValueError):
        rope_3d(q, -1, 0, 0, cfg)


def test_rope_3d_axes_use_disjoint_slices():
    cfg = RopeConfig(d=12, partition=(4, 4, 4))
    v = np.arange(1.0, 13.0)
    out = rope_3d(v, 5, 0, 0, cfg)
    assert np.array_equal(out[4:], v[4:])
    out = rope_3d(v, 0, 0, 3, cfg)
    assert np.array_equal(out[:8], v[:8])
    cfg_t = RopeConfig(d=12, partition=(4, 4, 4), enabled_axes=("x", "y"))
    assert np.array_equal(rope_3d(v, 9, 0, 0, cfg_t), v)


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_rope_3d_shift_invariance_per_axis(axis):
    cfg = RopeConfig(d=24)
    rng = make_rng(10 + axis)
    for _ in range(100):
        q, k = rng.standard_normal(24), rng.standard_normal(24)
        p1, p2 = rng.integers(0, 20, 3), rng.integers(0, 20, 3)
        s = np.zeros(3, int)
        s[axis] = rng.integers(1, 30)
        a = rope_3d(q, *p1, cfg) @ rope_3d(k, *p2, cfg)
        b = rope_3d(q, *(p1 + s), cfg) @ rope_3d(k, *(p2 + s), cfg)
        assert abs(a - b) < 1e-9


def test_camera_block():
    assert np.array_equal(camera_block(np.eye(4), 8), np.eye(8))
    rng = make_rng(3)
    P1, P2 = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    B = camera_block(P1, 8)
    assert np.array_equal(B[:4, :4], P1) and np.array_equal(B[4:, 4:], P1)
    assert np.all(B[:4, 4:] == 0) and np.all(B[4:, :4] == 0)
    np.testing.assert_allclose(camera_block(P1, 8) @ camera_block(P2, 8), camera_block(P1 @ P2, 8), atol=1e-12)
    with pytest.raises(ValueError):
        camera_block(P1, 6)


def test_unified_apply_degenerates_to_rope_3d():
    cfg0 = RopeConfig(d=12)
    v = make_rng(4).standard_normal(12)
    pos = TokenPosition(0, 2, 1, 3)
    assert np.array_equal(unified_apply(v, pos, cfg0, "query"), rope_3d(v, 2, 1, 3, cfg0))
    cfg = RopeConfig(d=12, d_c=8)
    with pytest.raises(ValueError):
        unified_apply(np.ones(20), pos, cfg, "query")
    with pytest.raises(ValueError):
        unified_apply(np.ones(12), pos, cfg, "query")


def test_unified_identity_cameras_plain_dot():
    cfg = RopeConfig(d=12, d_c=8)
    rng = make_rng(5)
    q, k = rng.standard_normal(20), rng.standard_normal(20)
    pq = TokenPosition(0, 1, 2, 3, np.eye(4))
    pk = TokenPosition(1, 1, 2, 3, np.eye(4))
    qa, ka = unified_apply(q, pq, cfg, "query"), unified_apply(k, pk, cfg, "key")
    assert qa[12:] @ ka[12:] == pytest.approx(q[12:] @ k[12:], rel=1e-12)
    assert unified_logit(q, k, pq, pk, cfg) == pytest.approx(q @ k, rel=1e-12)


def test_unified_rig_camera_sublogit():
    intr = Intrinsics(64.0, 64.0, 32.0, 32.0, 64, 64)
    rig = StereoRig.rectified(intr, Extrinsics(), 0.1)
    pol = NormalizationPolicy()
    Pl, Pr = projective_matrix(rig.left, pol), projective_matrix(rig.right, pol)
    rng = make_rng(6)
    for variant in ("inverse", "transpose"):
        cfg = RopeConfig(d=6, d_c=8, variant=variant)
        for _ in range(10):
            q, k = rng.standard_normal(14), rng.standard_normal(14)
            qa = unified_apply(q, TokenPosition(0, 0, 0, 0, Pl), cfg, "query")
            ka = unified_apply(k, TokenPosition(1, 0, 0, 0, Pr), cfg, "key")
            expected = q[6:] @ camera_block(relative_transform(Pl, Pr, variant), 8) @ k[6:]
            assert qa[6:] @ ka[6:] == pytest.approx(expected, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("variant", ["inverse", "transpose"])
def test_fast_path_matches_explicit_matrix_oracle(variant):
    cfg = RopeConfig(d=18, d_c=8, variant=variant)
    rng = make_rng(7)
    for _ in range(1000):
        q, k = rng.standard_normal(26), rng.standard_normal(26)
        pq = TokenPosition(0, *rng.integers(0, 16, 3), random_P(rng))
        pk = TokenPosition(1, *rng.integers(0, 16, 3), random_P(rng))
        fast = unified_apply(q, pq, cfg, "query") @ unified_apply(k, pk, cfg, "key")
        slow = unified_logit(q, k, pq, pk, cfg)
        assert abs(fast - slow) <= 1e-9 * max(1.0, abs(slow))


def test_zeroed_camera_dims_give_baseline_logit():
    cfg = RopeConfig(d=12, d_c=8)
    base = RopeConfig(d=12)
    rng = make_rng(8)
    for _ in range(20):
        q, k = rng.standard_normal(20), rng.standard_normal(20)
        q[12:] = 0
        pq = TokenPosition(0, *rng.integers(0, 8, 3), random_P(rng))
        pk = TokenPosition(1, *rng.integers(0, 8, 3), random_P(rng))
        expected = rope_3d(q[:12], pq.t, pq.x, pq.y, base) @ rope_3d(k[:12], pk.t, pk.x, pk.y, base)
        assert unified_logit(q, k, pq, pk, cfg) == pytest.approx(expected, rel=1e-12, abs=1e-12)
        fast = unified_apply(q, pq, cfg, "query") @ unified_apply(k, pk, cfg, "key")
        assert fast == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_unified_shift_and_world_frame_invariance():
    cfg = RopeConfig(d=12, d_c=8)
    rng = make_rng(9)
    for _ in range(200):
        q, k = rng.standard_normal(20), rng.standard_normal(20)
        K1, K2 = np.diag([1.1, 0.9, 1.0]), np.diag([0.8, 1.2, 1.0])
        T1, T2 = rigid(rng), rigid(rng)
        G = rigid(rng) @ np.diag([1.5, 0.7, 1.2, 1.0])
        p1, p2, s = rng.integers(0, 10, 3), rng.integers(0, 10, 3), rng.integers(0, 10, 3)
        ref = unified_logit(q, k, TokenPosition(0, *p1, projective_from_matrices(K1, T1)),
                            TokenPosition(1, *p2, projective_from_matrices(K2, T2)), cfg)
        shifted = unified_logit(q, k, TokenPosition(0, *(p1 + s), projective_from_matrices(K1, T1)),
                                TokenPosition(1, *(p2 + s), projective_from_matrices(K2, T2)), cfg)
        moved = unified_logit(q, k, TokenPosition(0, *p1, projective_from_matrices(K1, T1 @ G)),
                              TokenPosition(1, *p2, projective_from_matrices(K2, T2 @ G)), cfg)
        assert abs(shifted - ref) <= 1e-6
        assert abs(moved - ref) <= 1e-6 * max(1.0, abs(ref))


def test_transpose_variant_is_not_world_frame_invariant():
    cfg = RopeConfig(d=4, d_c=4, variant="transpose")
    rng = make_rng(10)
    q, k = rng.standard_normal(8), rng.standard_normal(8)
    P1, P2 = random_P(rng), random_P(rng)
    G = np.diag([2.0, 1.0, 1.0, 1.0])
    a = unified_logit(q, k, TokenPosition(0, 0, 0, 0, P1), TokenPosition(1, 0, 0, 0, P2), cfg)
    b = unified_logit(q, k, TokenPosition(0, 0, 0, 0, P1 @ G), TokenPosition(1, 0, 0, 0, P2 @ G), cfg)
    assert abs(a - b) > 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 40), st.integers(0, 40), st.integers(0, 40), st.integers(0, 2**32 - 1))
def test_rotary_dims_preserve_norm(t, x, y, seed):
    cfg = RopeConfig(d=16, d_c=8)
    v = make_rng(seed).standard_normal(24)
    out = unified_apply(v, TokenPosition(0, t, x, y, np.eye(4)), cfg, "query")
    assert np.linalg.norm(out[:16]) == pytest.approx(np.linalg.norm(v[:16]), rel=1e-12)
