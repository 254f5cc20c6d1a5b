import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from stereoattn.dit import (FlowState, ToyModelConfig, ToyStereoDiT, TrainConfig, TrainState, backward_check,
                            euler_sample, flow_loss, init_params, model_input, param_count, sample, train)
from stereoattn.kernels import make_rng
from stereoattn.randomized import random_rig_cameras
from stereoattn.rope import RopeConfig
from stereoattn.scenes import SceneConfig

SMALL = ToyModelConfig(layers=2, heads=2, d=16, d_c=4, width=16, grid=(3, 4, 4))


def inputs(cfg, seed, dtype=np.float64):
    rng = make_rng(seed)
    f, h, w = cfg.grid
    x = rng.standard_normal((2, f, h, w, cfg.channels))
    return model_input(x, x[:, 0]).astype(dtype), float(rng.uniform()), random_rig_cameras(rng, f)


def test_config_validation():
    with pytest.raises(ValueError):
        ToyModelConfig(init_strategy="other")
    with pytest.raises(ValueError):
        ToyModelConfig(attention_mode="row")
    with pytest.raises(ValueError):
        ToyModelConfig(d=16, d_c=4, rope=RopeConfig(d=16, d_c=8))
    with pytest.raises(ValueError):
        ToyModelConfig.from_dict({"layers": 1, "nope": 2})
    doc = SMALL.to_dict()
    assert ToyModelConfig.from_dict(doc) == SMALL


@pytest.mark.parametrize("mode", ["stereo", "full4d"])
def test_zero_init_matches_baseline(mode):
    cfg = replace(SMALL, init_strategy="zero", attention_mode=mode)
    base_cfg = replace(cfg, d_c=0, rope=None)
    model = ToyStereoDiT.create(cfg, seed=3, dtype=np.float32)
    base = ToyStereoDiT.create(base_cfg, seed=3, dtype=np.float32)
    for seed in range(5):
        x, t, cams = inputs(cfg, seed, np.float32)
        a = model.forward(x, t, cams)[0]
        b = base.forward(x, t, cams)[0]
        assert np.max(np.abs(a - b)) <= 1e-6


def test_copy_init_copies_temporal_columns():
    params = init_params(make_rng(0), SMALL)
    ts = SMALL.rope.axis_slice("t")
    for name in ("blocks.0.attn.w_q", "blocks.1.attn.w_k"):
        w = params[name]
        assert np.array_equal(w[..., SMALL.d:], w[..., ts][..., :SMALL.d_c])


def test_parameter_count_audit():
    base = param_count(init_params(make_rng(0), replace(SMALL, d_c=0, rope=None)))
    for strategy in ("zero", "copy"):
        p = init_params(make_rng(0), replace(SMALL, init_strategy=strategy))
        per_layer = 2 * SMALL.width * SMALL.d_c * SMALL.heads
        assert param_count(p) - base == SMALL.layers * per_layer


def test_copy_needs_wide_enough_temporal_partition():
    cfg = ToyModelConfig(d=8, d_c=8, width=8, grid=(2, 2, 2))  # t share = 4
    with pytest.raises(ValueError):
        init_params(make_rng(0), cfg)


def test_base_weights_independent_of_camera_dims():
    a = init_params(make_rng(1), SMALL)
    b = init_params(make_rng(1), replace(SMALL, d_c=0, rope=None))
    assert np.array_equal(a["blocks.1.attn.w_q"][..., :SMALL.d], b["blocks.1.attn.w_q"])
    assert np.array_equal(a["out.w"], b["out.w"])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_flow_state_interpolant(t, seed):
    rng = make_rng(seed)
    z0, z1 = rng.standard_normal((2, 5))
    fs = FlowState(z0, z1, t)
    assert np.array_equal(fs.z_t, (1 - t) * z0 + t * z1)
    assert np.array_equal(FlowState(z0, z1, 0.0).z_t, z0)
    assert np.array_equal(FlowState(z0, z1, 1.0).z_t, z1)


class OracleVelocity:
    """Stands in for a model: recovers z1 - z0 from the interpolant."""

    def __init__(self, cfg, z1):
        self.cfg, self.z1, self.dtype = cfg, z1, np.float64

    def forward(self, x, t, cams, mode=None, keep=False):
        zt = x[..., :-1]
        return (self.z1 - zt) / (1.0 - t), None


def test_flow_loss_oracle_is_zero():
    rng = make_rng(2)
    f, h, w = SMALL.grid
    z1 = rng.standard_normal((2, f, h, w, 1))
    cams = random_rig_cameras(rng, f)
    assert flow_loss(OracleVelocity(SMALL, z1), [(z1, cams)] * 4, make_rng(3)) < 1e-20


def test_flow_loss_zero_model_is_two():
    model = ToyStereoDiT.create(SMALL, 0, np.float64)
    model.params["out.w"][:] = 0
    model.params["out.b"][:] = 0
    rng = make_rng(4)
    f, h, w = SMALL.grid
    batch = [(rng.standard_normal((2, f, h, w, 1)), random_rig_cameras(rng, f)) for _ in range(160)]
    assert sum(z[:, 1:].size for z, _ in batch) >= 10_000
    assert flow_loss(model, batch, make_rng(5)) == pytest.approx(2.0, rel=0.05)


def test_euler_one_step_exact_with_oracle_field():
    rng = make_rng(6)
    z0, z1 = rng.standard_normal((2, 2, 3, 2, 2, 1))
    out = euler_sample(lambda z, t: z1 - z0, z0, z1[:, 0], 1)
    np.testing.assert_allclose(out, z1, atol=1e-12)
    out = euler_sample(lambda z, t: z1 - z0, z0, z1[:, 0], 7)
    np.testing.assert_allclose(out, z1, atol=1e-12)


def test_zero_field_is_fixed_point():
    z0 = make_rng(7).standard_normal((2, 3, 2, 2, 1))
    out = euler_sample(lambda z, t: np.zeros_like(z), z0, z0[:, 0], 20)
    assert np.array_equal(out, z0)
    with pytest.raises(ValueError):
        euler_sample(lambda z, t: z, z0, z0[:, 0], 0)


@pytest.mark.parametrize("mode", ["stereo", "full4d"])
def test_sample_shape_and_determinism(mode):
    model = ToyStereoDiT.create(SMALL, 0)
    x, _, cams = inputs(SMALL, 8)
    cond = x[:, 0, ..., :1]
    a = sample(model, cond, cams, 3, make_rng(1), mode)
    b = sample(model, cond, cams, 3, make_rng(1), mode)
    assert a.shape == (2,) + SMALL.grid + (1,)
    assert np.array_equal(a, b)
    assert np.array_equal(a[:, 0], cond.astype(a.dtype))


@pytest.mark.parametrize("mode", ["stereo", "full4d"])
def test_backward_matches_finite_differences(mode):
    model = ToyStereoDiT.create(replace(SMALL, attention_mode=mode), 1, np.float64)
    for p in model.params.values():  # move off the symmetric init
        p += make_rng(2).standard_normal(p.shape) * 0.05
    x, t, cams = inputs(SMALL, 9)
    rep = backward_check(model, x, t, cams, make_rng(3), n_probes=30)
    assert rep.max_rel_error <= 1e-4, rep.probes


def test_backward_check_linear_head_is_exact():
    model = ToyStereoDiT.create(SMALL, 1, np.float64)
    x, t, cams = inputs(SMALL, 10)
    rep = backward_check(model, x, t, cams, make_rng(4), n_probes=10, eps=1e-3, names=["out.w", "out.b"])
    assert rep.max_rel_error <= 1e-9


def test_backward_check_rejects_float32():
    model = ToyStereoDiT.create(SMALL, 1, np.float32)
    x, t, cams = inputs(SMALL, 10)
    with pytest.raises(ValueError):
        backward_check(model, x, t, cams, make_rng(0))


def test_zero_init_camera_gradients_nonzero():
    cfg = replace(SMALL, init_strategy="zero")
    model = ToyStereoDiT.create(cfg, 1, np.float64)
    x, t, cams = inputs(cfg, 11)
    _, cache = model.forward(x, t, cams, keep=True)
    g = model.backward(make_rng(5).standard_normal(x.shape[:-1] + (1,)), cache)
    cam_grad = g["blocks.0.attn.w_q"][..., cfg.d:]
    assert np.all(model.params["blocks.0.attn.w_q"][..., cfg.d:] == 0)
    assert np.abs(cam_grad).max() > 1e-6


def tiny_train_config(**kw):
    model = ToyModelConfig(layers=1, heads=1, d=8, d_c=4, width=8, grid=(2, 4, 4))
    return TrainConfig(steps=4, batch=2, dtype="f64", model=model, scene=SceneConfig(f=2, h=4, w=4), **kw)


def test_training_is_deterministic():
    cfg = tiny_train_config()
    runs = []
    for _ in range(2):
        log = []
        train(TrainState.fresh(cfg), log=log.append)
        runs.append([r["loss"] for r in log])
    assert runs[0] == runs[1]


def test_resume_continues_loss_curve(tmp_path):
    cfg = tiny_train_config()
    straight = []
    train(TrainState.fresh(cfg), log=straight.append)
    first = []
    state = train(TrainState.fresh(cfg), 2, first.append)
    path = str(tmp_path / "ck.zip")
    state.save(path)
    resumed = TrainState.load(path)
    assert resumed.step == 2
    rest = []
    train(resumed, log=rest.append)
    assert [r["loss"] for r in first + rest] == [r["loss"] for r in straight]


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(scene=SceneConfig(f=2))
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"steps": 3, "wat": 1})
    cfg = tiny_train_config()
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
