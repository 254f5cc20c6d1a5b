"""A small stereo diffusion transformer trained with rectified flow.

Tokens are pixels of a two-view latent video; each carries its latent
channels plus a binary channel marking the clean conditioning frame (frame
0 of both views).  Blocks are pre-norm attention + MLP with residuals; the
attention is either joint 4-D or the intra-view + row decomposition, both
with camera-frame rotary encoding.  Every backward pass is written out by
hand.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .attention import AttentionParams, Encoding, TokenGrid, layer_backward, layer_forward
from .camera import NormalizationPolicy
from .container import config_hash, load_archive, save_archive
from .kernels import NonFiniteError, check_finite, fd_gradient, make_rng, resolve_dtype
from .rope import RopeConfig
from .scenes import SceneConfig, SyntheticScene, generate_scene

MODEL_MODES = ("stereo", "full4d")
INIT_STRATEGIES = ("zero", "copy")


@dataclass(frozen=True)
class ToyModelConfig:
    layers: int = 2
    heads: int = 2
    d: int = 32
    d_c: int = 8
    width: int = 64
    channels: int = 1
    grid: Tuple[int, int, int] = (4, 8, 8)
    init_strategy: str = "copy"
    attention_mode: str = "stereo"
    rope: Optional[RopeConfig] = None
    mlp_ratio: int = 4
    time_features: int = 32
    camera_scene_scale: float = 1.0

    def __post_init__(self):
        rope = self.rope if self.rope is not None else RopeConfig(d=self.d, d_c=self.d_c)
        if isinstance(rope, dict):
            rope = RopeConfig.from_dict(rope)
        if (rope.d, rope.d_c) != (self.d, self.d_c):
            raise ValueError("rope config disagrees with d / d_c")
        object.__setattr__(self, "rope", rope)
        object.__setattr__(self, "grid", tuple(int(g) for g in self.grid))
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(f"init_strategy must be one of {INIT_STRATEGIES}")
        if self.attention_mode not in MODEL_MODES:
            raise ValueError(f"attention_mode must be one of {MODEL_MODES}")
        if min(self.layers, self.heads, self.width, self.channels, *self.grid) < 1:
            raise ValueError("sizes must be positive")

    @property
    def policy(self) -> NormalizationPolicy:
        return NormalizationPolicy(True, self.camera_scene_scale)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["grid"] = list(self.grid)
        doc["rope"] = json.loads(self.rope.to_json())
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ToyModelConfig":
        _reject_unknown(cls, doc)
        doc = dict(doc)
        if isinstance(doc.get("rope"), dict):
            doc["rope"] = RopeConfig.from_dict(doc["rope"])
        return cls(**doc)


def _reject_unknown(cls, doc):
    unknown = set(doc) - set(cls.__dataclass_fields__)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")


# -- parameters -----------------------------------------------------------------

Params = Dict[str, np.ndarray]


def _attn_names(i: int) -> Tuple[str, str, str, str]:
    return tuple(f"blocks.{i}.attn.{n}" for n in ("w_q", "w_k", "w_v", "w_o"))


def init_params(rng: np.random.Generator, cfg: ToyModelConfig, dtype=np.float32) -> Params:
    """Seeded base weights plus the camera sub-space of the query/key projections.

    Base weights are drawn in a fixed order that does not depend on ``d_c``,
    so models differing only in ``d_c`` share them.  Camera columns:

    * ``copy``: both query and key camera columns copy the first ``d_c``
      temporal-axis columns of the same head.
    * ``zero``: query camera columns are zero, so every logit (hence the
      output) equals the ``d_c = 0`` model; key camera columns copy the
      temporal columns so the query side receives gradient.
    """
    dtype = resolve_dtype(dtype)
    m, H, d, dc, c = cfg.width, cfg.heads, cfg.d, cfg.d_c, cfg.channels
    t_slice = cfg.rope.axis_slice("t")
    if dc > t_slice.stop - t_slice.start:
        raise ValueError(f"temporal partition ({t_slice.stop - t_slice.start}) is smaller than d_c={dc}")
    hidden = cfg.mlp_ratio * m
    nrm = rng.standard_normal
    p: Params = {
        "embed.w": nrm((c + 1, m)) / math.sqrt(c + 1),
        "embed.b": np.zeros(m),
        "ctx": nrm(m) * 0.02,
        "time.w1": nrm((cfg.time_features, m)) / math.sqrt(cfg.time_features),
        "time.b1": np.zeros(m),
        "time.w2": nrm((m, m)) / math.sqrt(m),
        "time.b2": np.zeros(m),
    }
    for i in range(cfg.layers):
        wq, wk, wv, wo = _attn_names(i)
        base_q = nrm((m, H, d)) / math.sqrt(m)
        base_k = nrm((m, H, d)) / math.sqrt(m)
        p[f"blocks.{i}.ln1.g"] = np.ones(m)
        p[f"blocks.{i}.ln1.b"] = np.zeros(m)
        p[wq] = _expand(base_q, dc, t_slice, zero=cfg.init_strategy == "zero")
        p[wk] = _expand(base_k, dc, t_slice, zero=False)
        p[wv] = nrm((m, H, d)) / math.sqrt(m)
        p[wo] = nrm((H, d, m)) / math.sqrt(H * d) * 0.5
        p[f"blocks.{i}.ln2.g"] = np.ones(m)
        p[f"blocks.{i}.ln2.b"] = np.zeros(m)
        p[f"blocks.{i}.mlp.w1"] = nrm((m, hidden)) / math.sqrt(m)
        p[f"blocks.{i}.mlp.b1"] = np.zeros(hidden)
        p[f"blocks.{i}.mlp.w2"] = nrm((hidden, m)) / math.sqrt(hidden) * 0.5
        p[f"blocks.{i}.mlp.b2"] = np.zeros(m)
    p["final.ln.g"] = np.ones(m)
    p["final.ln.b"] = np.zeros(m)
    p["out.w"] = nrm((m, c)) / math.sqrt(m) * 0.5
    p["out.b"] = np.zeros(c)
    return {k: v.astype(dtype) for k, v in p.items()}


def _expand(base: np.ndarray, dc: int, t_slice: slice, zero: bool) -> np.ndarray:
    if dc == 0:
        return base
    cam = np.zeros(base.shape[:2] + (dc,)) if zero else base[..., t_slice][..., :dc].copy()
    return np.concatenate([base, cam], axis=-1)


def param_count(params: Params) -> int:
    return sum(int(v.size) for v in params.values())


# -- small differentiable pieces ------------------------------------------------------

def _ln(x, g, b, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xh = xc * rstd
    return xh * g + b, (xh, rstd)


def _ln_back(dy, cache, g):
    xh, rstd = cache
    dxh = dy * g
    dx = rstd * (dxh - dxh.mean(axis=-1, keepdims=True) - xh * (dxh * xh).mean(axis=-1, keepdims=True))
    return dx, (dy * xh).sum(axis=0), dy.sum(axis=0)


_GC = math.sqrt(2.0 / math.pi)


def _gelu(x):
    x2 = x * x
    return 0.5 * x * (1.0 + np.tanh(_GC * x * (1.0 + 0.044715 * x2)))


def _gelu_grad(x):
    x2 = x * x
    th = np.tanh(_GC * x * (1.0 + 0.044715 * x2))
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * _GC * (1.0 + 3 * 0.044715 * x2)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def time_features(t: float, n: int, dtype=np.float64) -> np.ndarray:
    half = n // 2
    freqs = np.exp(-math.log(1000.0) * np.arange(half) / half)
    arg = 1000.0 * t * freqs
    return np.concatenate([np.cos(arg), np.sin(arg)]).astype(dtype)


# -- model ---------------------------------------------------------------------------

class ToyStereoDiT:
    """Velocity predictor ``v(z_t, t | cameras, clean frame 0)``."""

    def __init__(self, cfg: ToyModelConfig, params: Params):
        self.cfg = cfg
        self.params = params

    @classmethod
    def create(cls, cfg: ToyModelConfig, seed: int = 0, dtype=np.float32) -> "ToyStereoDiT":
        return cls(cfg, init_params(make_rng(seed), cfg, dtype))

    @property
    def dtype(self):
        return self.params["embed.w"].dtype

    def layout(self, cameras: np.ndarray) -> TokenGrid:
        f, h, w = self.cfg.grid
        return TokenGrid(np.zeros((2, f, h, w, 1), dtype=self.dtype), cameras)

    def forward(self, x: np.ndarray, t: float, cameras: np.ndarray, mode: Optional[str] = None,
                keep: bool = False):
        """``x``: (2, f, h, w, channels + 1) model input.  Returns (velocity, cache)."""
        cfg, p = self.cfg, self.params
        mode = mode or cfg.attention_mode
        grid = self.layout(cameras)
        enc = Encoding.build(grid, cfg.rope, self.dtype)
        xt = x.reshape(-1, x.shape[-1]).astype(self.dtype, copy=False)
        tf = time_features(t, cfg.time_features, self.dtype)
        e1 = tf @ p["time.w1"] + p["time.b1"]
        s1 = e1 * _sigmoid(e1)
        temb = s1 @ p["time.w2"] + p["time.b2"]
        h = xt @ p["embed.w"] + p["embed.b"] + p["ctx"] + temb
        caches = []
        for i in range(cfg.layers):
            pre = f"blocks.{i}."
            a, lc1 = _ln(h, p[pre + "ln1.g"], p[pre + "ln1.b"])
            ap = AttentionParams(*(p[n] for n in _attn_names(i)))
            y, ac = layer_forward(a, grid, ap, cfg.rope, mode, enc=enc)
            h = h + y
            bb, lc2 = _ln(h, p[pre + "ln2.g"], p[pre + "ln2.b"])
            u = bb @ p[pre + "mlp.w1"] + p[pre + "mlp.b1"]
            gu = _gelu(u)
            h = h + gu @ p[pre + "mlp.w2"] + p[pre + "mlp.b2"]
            if keep:
                caches.append((lc1, ac, lc2, bb, u, gu))
        hf, lcf = _ln(h, p["final.ln.g"], p["final.ln.b"])
        out = hf @ p["out.w"] + p["out.b"]
        check_finite(out, "model output")
        cache = (xt, tf, e1, s1, caches, hf, lcf) if keep else None
        return out.reshape(x.shape[:-1] + (cfg.channels,)), cache

    def backward(self, dout: np.ndarray, cache) -> Params:
        cfg, p = self.cfg, self.params
        xt, tf, e1, s1, caches, hf, lcf = cache
        dout = dout.reshape(-1, cfg.channels)
        g: Params = {"out.w": hf.T @ dout, "out.b": dout.sum(axis=0)}
        dh, g["final.ln.g"], g["final.ln.b"] = _ln_back(dout @ p["out.w"].T, lcf, p["final.ln.g"])
        for i in reversed(range(cfg.layers)):
            pre = f"blocks.{i}."
            lc1, ac, lc2, bb, u, gu = caches[i]
            g[pre + "mlp.w2"] = gu.T @ dh
            g[pre + "mlp.b2"] = dh.sum(axis=0)
            du = (dh @ p[pre + "mlp.w2"].T) * _gelu_grad(u)
            g[pre + "mlp.w1"] = bb.T @ du
            g[pre + "mlp.b1"] = du.sum(axis=0)
            dbb, g[pre + "ln2.g"], g[pre + "ln2.b"] = _ln_back(du @ p[pre + "mlp.w1"].T, lc2, p[pre + "ln2.g"])
            dh = dh + dbb
            da, ga = layer_backward(dh, ac)
            for n, name in zip(("w_q", "w_k", "w_v", "w_o"), _attn_names(i)):
                g[name] = ga[n]
            dx, g[pre + "ln1.g"], g[pre + "ln1.b"] = _ln_back(da, lc1, p[pre + "ln1.g"])
            dh = dh + dx
        g["embed.w"] = xt.T @ dh
        g["embed.b"] = dh.sum(axis=0)
        g["ctx"] = dh.sum(axis=0)
        dtemb = dh.sum(axis=0)
        g["time.w2"] = np.outer(s1, dtemb)
        g["time.b2"] = dtemb
        sg = _sigmoid(e1)
        de1 = (dtemb @ p["time.w2"].T) * (sg * (1.0 + e1 * (1.0 - sg)))
        g["time.w1"] = np.outer(tf, de1)
        g["time.b1"] = de1
        return g


# -- rectified flow -------------------------------------------------------------------

@dataclass
class FlowState:
    z0: np.ndarray
    z1: np.ndarray
    t: float

    @property
    def z_t(self) -> np.ndarray:
        return (1.0 - self.t) * self.z0 + self.t * self.z1

    @property
    def velocity(self) -> np.ndarray:
        return self.z1 - self.z0


def model_input(z: np.ndarray, cond: np.ndarray) -> np.ndarray:
    """Overwrite frame 0 with the clean condition and append the condition-mask channel."""
    z = z.copy()
    z[:, 0] = cond
    mask = np.zeros(z.shape[:-1] + (1,), dtype=z.dtype)
    mask[:, 0] = 1.0
    return np.concatenate([z, mask], axis=-1)


def _loss_terms(model, z1, cams, z0, t, mode=None, keep=False):
    dt = model.dtype
    z1 = z1.astype(dt)
    z0 = z0.astype(dt)
    fs = FlowState(z0, z1, t)
    x = model_input(fs.z_t.astype(dt), z1[:, 0])
    pred, cache = model.forward(x, t, cams, mode, keep)
    err = (pred - fs.velocity)[:, 1:]
    return err, cache


def flow_loss(model: ToyStereoDiT, batch: Sequence[Tuple[np.ndarray, np.ndarray]],
              rng: np.random.Generator, mode: Optional[str] = None) -> float:
    """Mean squared velocity error over non-conditioning frames.

    ``batch`` holds (clean latent (2, f, h, w, c), cameras (2, f, 4, 4)) pairs;
    ``rng`` draws the noise latent and a uniform time per item.
    """
    total, count = 0.0, 0
    for z1, cams in batch:
        z0 = rng.standard_normal(z1.shape)
        t = float(rng.uniform())
        err, _ = _loss_terms(model, z1, cams, z0, t, mode)
        total += float(np.sum(err.astype(np.float64) ** 2))
        count += err.size
    loss = total / count
    if not math.isfinite(loss):
        raise NonFiniteError("non-finite loss")
    return loss


def flow_loss_and_grad(model: ToyStereoDiT, batch, rng, mode=None) -> Tuple[float, Params]:
    draws = [(rng.standard_normal(z1.shape), float(rng.uniform())) for z1, _ in batch]
    n = sum(z1[:, 1:].size for z1, _ in batch)
    total = 0.0
    grads: Params = {}
    for (z1, cams), (z0, t) in zip(batch, draws):
        err, cache = _loss_terms(model, z1, cams, z0, t, mode, keep=True)
        total += float(np.sum(err.astype(np.float64) ** 2))
        dpred = np.zeros(z1.shape, dtype=model.dtype)
        dpred[:, 1:] = 2.0 * err / n
        for k, v in model.backward(dpred, cache).items():
            grads[k] = grads[k] + v if k in grads else v
    loss = total / n
    if not math.isfinite(loss):
        raise NonFiniteError("non-finite loss")
    return loss, grads


def euler_sample(velocity: Callable[[np.ndarray, float], np.ndarray], z0: np.ndarray, cond: np.ndarray,
                 steps: int) -> np.ndarray:
    """Integrate dz/dt = v from t=0 (noise) to t=1 with ``steps`` uniform Euler steps.

    Frame 0 is pinned to ``cond`` throughout.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    z = z0.copy()
    z[:, 0] = cond
    dt = 1.0 / steps
    for i in range(steps):
        z = z + dt * velocity(z, i * dt)
        z[:, 0] = cond
        if not np.all(np.isfinite(z)):
            raise NonFiniteError(f"sampler diverged at step {i}")
    return z


def sample(model: ToyStereoDiT, cond: np.ndarray, cameras: np.ndarray, steps: int = 20,
           rng: Optional[np.random.Generator] = None, mode: Optional[str] = None) -> np.ndarray:
    """Generate a (2, f, h, w, c) latent video from noise given clean frame 0 and cameras."""
    f, h, w = model.cfg.grid
    rng = rng if rng is not None else make_rng(0)
    z0 = rng.standard_normal((2, f, h, w, model.cfg.channels)).astype(model.dtype)

    def velocity(z, t):
        return model.forward(model_input(z, cond), t, cameras, mode)[0]

    return euler_sample(velocity, z0, cond.astype(model.dtype), steps)


# -- gradient check ----------------------------------------------------------------------

@dataclass
class GradReport:
    max_rel_error: float
    probes: List[Tuple[str, int, float, float]]


def rel_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def backward_check(model: ToyStereoDiT, x: np.ndarray, t: float, cameras: np.ndarray,
                   rng: np.random.Generator, n_probes: int = 10, eps: float = 1e-6,
                   names: Optional[Sequence[str]] = None) -> GradReport:
    """Compare hand-written parameter gradients with central differences (float64 only)."""
    if model.dtype != np.float64:
        raise ValueError("backward_check needs a float64 model")
    w = rng.standard_normal(x.shape[:-1] + (model.cfg.channels,))

    def objective() -> float:
        return float(np.sum(model.forward(x, t, cameras)[0] * w))

    _, cache = model.forward(x, t, cameras, keep=True)
    grads = model.backward(w, cache)
    names = list(names) if names is not None else sorted(model.params)
    probes = []
    for _ in range(n_probes):
        name = names[int(rng.integers(len(names)))]
        arr = model.params[name]
        i = int(rng.integers(arr.size))

        def f(a, name=name):
            saved = model.params[name]
            model.params[name] = a
            try:
                return objective()
            finally:
                model.params[name] = saved

        num = float(fd_gradient(f, arr, eps, indices=[i]).reshape(-1)[i])
        ana = float(grads[name].reshape(-1)[i])
        probes.append((name, i, ana, num))
    return GradReport(max(rel_error(a, n) for _, _, a, n in probes), probes)


# -- training ------------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch: int = 4
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: Optional[float] = 1.0
    seed: int = 0
    dtype: str = "f32"
    heldout: int = 16
    model: ToyModelConfig = ToyModelConfig()
    scene: SceneConfig = SceneConfig()

    def __post_init__(self):
        if isinstance(self.model, dict):
            object.__setattr__(self, "model", ToyModelConfig.from_dict(self.model))
        if isinstance(self.scene, dict):
            _reject_unknown(SceneConfig, self.scene)
            doc = {k: tuple(v) if isinstance(v, list) else v for k, v in self.scene.items()}
            object.__setattr__(self, "scene", SceneConfig(**doc))
        if (self.scene.f, self.scene.h, self.scene.w) != self.model.grid:
            raise ValueError("scene grid and model grid differ")
        if self.scene.channels != self.model.channels:
            raise ValueError("scene and model channel counts differ")
        if self.steps < 0 or self.batch < 1 or self.lr <= 0:
            raise ValueError("invalid optimisation settings")
        resolve_dtype(self.dtype)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["model"] = self.model.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        _reject_unknown(cls, doc)
        return cls(**doc)


@dataclass
class TrainState:
    config: TrainConfig
    model: ToyStereoDiT
    m: Params
    v: Params
    step: int = 0

    @classmethod
    def fresh(cls, config: TrainConfig) -> "TrainState":
        model = ToyStereoDiT.create(config.model, config.seed, config.dtype)
        zeros = {k: np.zeros_like(a) for k, a in model.params.items()}
        return cls(config, model, zeros, {k: a.copy() for k, a in zeros.items()})

    def save(self, path: str) -> None:
        tensors = {f"param.{k}": a for k, a in self.model.params.items()}
        tensors.update({f"adam_m.{k}": a for k, a in self.m.items()})
        tensors.update({f"adam_v.{k}": a for k, a in self.v.items()})
        cfg = self.config.to_dict()
        save_archive(path, tensors, {"config": cfg, "config_hash": config_hash(cfg), "step": self.step})

    @classmethod
    def load(cls, path: str) -> "TrainState":
        tensors, manifest = load_archive(path)
        if config_hash(manifest["config"]) != manifest["config_hash"]:
            raise ValueError("checkpoint manifest hash mismatch")
        config = TrainConfig.from_dict(manifest["config"])

        def part(prefix):
            return {k[len(prefix):]: a for k, a in tensors.items() if k.startswith(prefix)}

        model = ToyStereoDiT(config.model, part("param."))
        return cls(config, model, part("adam_m."), part("adam_v."), int(manifest["step"]))


def scene_batch(cfg: TrainConfig, rng: np.random.Generator, n: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    out = []
    for _ in range(n):
        s = generate_scene(rng, cfg.scene)
        out.append((s.video, s.cameras(cfg.model.policy)))
    return out


def heldout_scenes(cfg: TrainConfig, n: Optional[int] = None, **overrides) -> List[SyntheticScene]:
    scene_cfg = replace(cfg.scene, **overrides) if overrides else cfg.scene
    return [generate_scene(make_rng(cfg.seed, 3, i), scene_cfg) for i in range(n or cfg.heldout)]


def heldout_loss(state: TrainState, scenes: Optional[Sequence[SyntheticScene]] = None, draws: int = 4,
                 mode: Optional[str] = None) -> float:
    """Flow loss on held-out scenes with fixed noise and time draws."""
    cfg = state.config
    scenes = scenes if scenes is not None else heldout_scenes(cfg)
    batch = [(s.video, s.cameras(cfg.model.policy)) for s in scenes for _ in range(draws)]
    return flow_loss(state.model, batch, make_rng(cfg.seed, 4), mode)


def adam_update(state: TrainState, grads: Params) -> None:
    cfg = state.config
    if cfg.grad_clip is not None:
        norm = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
        if norm > cfg.grad_clip:
            grads = {k: g * (cfg.grad_clip / norm) for k, g in grads.items()}
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, p in state.model.params.items():
        g = grads[k].astype(p.dtype, copy=False)
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        upd = cfg.lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + cfg.adam_eps)
        state.model.params[k] = (p - upd).astype(p.dtype)


def train(state: TrainState, steps: Optional[int] = None,
          log: Optional[Callable[[dict], None]] = None) -> TrainState:
    """Advance ``state`` to ``steps`` total optimiser steps (default: the config's).

    Batches and noise for step ``s`` come from sub-streams keyed by
    ``(seed, s)``, so a resumed run replays exactly what an uninterrupted one
    would have seen.
    """
    cfg = state.config
    target = cfg.steps if steps is None else steps
    while state.step < target:
        t0 = time.perf_counter()
        s = state.step
        batch = scene_batch(cfg, make_rng(cfg.seed, 1, s), cfg.batch)
        loss, grads = flow_loss_and_grad(state.model, batch, make_rng(cfg.seed, 2, s))
        adam_update(state, grads)
        if log is not None:
            log({"step": s, "loss": loss, "wall_ms": (time.perf_counter() - t0) * 1e3})
    return state


# -- disparity readout ---------------------------------------------------------------------

def disparity_peak(left: np.ndarray, right: np.ndarray, max_offset: int) -> int:
    """Integer offset s maximising the correlation of right[..., x] with left[..., x + s].

    Arrays are (frames, h, w, c); only overlapping columns enter each score.
    """
    w = left.shape[2]
    best, best_s = -np.inf, 0
    for s in range(0, max_offset + 1):
        a = right[:, :, : w - s].reshape(-1)
        b = left[:, :, s:].reshape(-1)
        a = a - a.mean()
        b = b - b.mean()
        denom = np.sqrt(np.sum(a * a) * np.sum(b * b))
        score = float(np.sum(a * b) / denom) if denom > 0 else -np.inf
        if score > best:
            best, best_s = score, s
    return best_s
