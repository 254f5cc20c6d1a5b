"""Stereo attention variants over a two-view latent video.

Tokens are flattened in (view, t, y, x) order, outermost first.  Every
variant shares one set of projections and one camera-frame rotary encoding;
they differ only in which query/key pairs may interact:

* ``full4d``  - all pairs, one softmax over ``2*f*h*w`` tokens
* ``intra``   - pairs within one view (per-view 3-D attention)
* ``row``     - pairs sharing frame and image row, across both views
* ``stereo``  - ``intra + row`` with independent softmaxes, one output projection

Dense groups are gathered with index arrays so each branch is a batched
matmul; :func:`masked_dense_oracle` recomputes any variant the slow way.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .kernels import FlopCounter, check_finite, matmul, softmax_rows
from .rope import RopeConfig, _axis_angles, key_camera_matrix

MODES = ("full4d", "intra", "row", "stereo")


@dataclass
class TokenGrid:
    """Latent values of shape (views, f, h, w, c) plus per-(view, frame) cameras.

    ``cameras`` holds 4x4 projective matrices, shape (views, f, 4, 4);
    ``t0`` is the absolute frame index of the first frame (non-zero for
    chunks of a longer video).
    """
    values: np.ndarray
    cameras: Optional[np.ndarray] = None
    t0: int = 0

    def __post_init__(self):
        if self.values.ndim != 5 or min(self.values.shape) < 1:
            raise ValueError(f"grid values must be (views, f, h, w, c), got {self.values.shape}")
        if self.cameras is not None:
            self.cameras = np.asarray(self.cameras, dtype=np.float64)
            if self.cameras.shape != self.values.shape[:2] + (4, 4):
                raise ValueError("cameras must have shape (views, f, 4, 4)")

    @property
    def views(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> Tuple[int, int, int, int]:
        v, f, h, w, _ = self.values.shape
        return v, f, h, w

    @property
    def n_tokens(self) -> int:
        v, f, h, w = self.dims
        return v * f * h * w

    def flat(self) -> np.ndarray:
        return self.values.reshape(self.n_tokens, -1)

    def with_values(self, flat: np.ndarray) -> "TokenGrid":
        return TokenGrid(flat.reshape(self.dims + (-1,)), self.cameras, self.t0)

    def frames(self, start: int, stop: int) -> "TokenGrid":
        cams = None if self.cameras is None else self.cameras[:, start:stop]
        return TokenGrid(self.values[:, start:stop], cams, self.t0 + start)


class TokenMeta(NamedTuple):
    view: np.ndarray
    t: np.ndarray
    y: np.ndarray
    x: np.ndarray


def token_meta(grid: TokenGrid) -> TokenMeta:
    v, f, h, w = grid.dims
    vv, tt, yy, xx = np.meshgrid(np.arange(v), np.arange(f) + grid.t0, np.arange(h), np.arange(w),
                                 indexing="ij")
    return TokenMeta(vv.ravel(), tt.ravel(), yy.ravel(), xx.ravel())


@dataclass
class AttentionParams:
    """Projection weights shared by every attention variant.

    Shapes: ``w_q``, ``w_k``: (c, heads, d + d_c); ``w_v``: (c, heads, d);
    ``w_o``: (heads, d, c_out).
    """
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    def __post_init__(self):
        c, H, W = self.w_q.shape
        if self.w_k.shape != (c, H, W):
            raise ValueError("w_k must match w_q")
        if self.w_v.shape[:2] != (c, H) or self.w_o.shape[:2] != (H, self.w_v.shape[2]):
            raise ValueError("inconsistent value/output projections")

    @property
    def heads(self) -> int:
        return self.w_q.shape[1]

    @classmethod
    def init(cls, rng: np.random.Generator, c: int, heads: int, cfg: RopeConfig,
             c_out: Optional[int] = None, dtype=np.float64) -> "AttentionParams":
        c_out = c if c_out is None else c_out
        s_in, s_out = 1.0 / math.sqrt(c), 1.0 / math.sqrt(heads * cfg.d)
        return cls(
            (rng.standard_normal((c, heads, cfg.width)) * s_in).astype(dtype),
            (rng.standard_normal((c, heads, cfg.width)) * s_in).astype(dtype),
            (rng.standard_normal((c, heads, cfg.d)) * s_in).astype(dtype),
            (rng.standard_normal((heads, cfg.d, c_out)) * s_out).astype(dtype),
        )

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {"w_q": self.w_q, "w_k": self.w_k, "w_v": self.w_v, "w_o": self.w_o}


# -- positional encoding for a whole grid --------------------------------------

@dataclass
class Encoding:
    """Precomputed rotary angles and per-token camera matrices for one grid."""
    cfg: RopeConfig
    cos: np.ndarray
    sin: np.ndarray
    cam_q: Optional[np.ndarray]
    cam_k: Optional[np.ndarray]

    @classmethod
    def build(cls, grid: TokenGrid, cfg: RopeConfig, dtype=np.float64) -> "Encoding":
        meta = token_meta(grid)
        angles = _axis_angles(cfg, meta.t, meta.x, meta.y)
        cam_q = cam_k = None
        if cfg.d_c:
            if grid.cameras is None:
                raise ValueError("camera required when d_c > 0")
            frame = meta.t - grid.t0
            P = grid.cameras[meta.view, frame]
            cam_q = P.astype(dtype)
            cam_k = key_camera_matrix(grid.cameras, cfg.variant)[meta.view, frame].astype(dtype)
        return cls(cfg, np.cos(angles).astype(dtype), np.sin(angles).astype(dtype), cam_q, cam_k)

    def _rotate(self, v: np.ndarray, sign: float) -> np.ndarray:
        even, odd = v[..., 0::2], v[..., 1::2]
        s = self.sin * sign
        out = np.empty_like(v)
        out[..., 0::2] = even * self.cos - odd * s
        out[..., 1::2] = even * s + odd * self.cos
        return out

    def apply(self, v: np.ndarray, side: str) -> np.ndarray:
        """Encode (heads, N, d + d_c) queries or keys."""
        d = self.cfg.d
        out = np.empty_like(v)
        out[..., :d] = self._rotate(v[..., :d], 1.0)
        if self.cfg.d_c:
            M = self.cam_q if side == "query" else self.cam_k
            out[..., d:] = _cam(v[..., d:], M)
        return out

    def apply_transpose(self, g: np.ndarray, side: str) -> np.ndarray:
        """Adjoint of :meth:`apply`, for backpropagation."""
        d = self.cfg.d
        out = np.empty_like(g)
        out[..., :d] = self._rotate(g[..., :d], -1.0)
        if self.cfg.d_c:
            M = self.cam_q if side == "query" else self.cam_k
            out[..., d:] = _cam(g[..., d:], M.swapaxes(-1, -2))
        return out


def project(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(N, c) tokens times (c, heads, width) weights -> (heads, N, width)."""
    c, H, W = w.shape
    return (x @ w.reshape(c, H * W)).reshape(-1, H, W).transpose(1, 0, 2)


def project_back(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`project` w.r.t. its input: (heads, N, width) -> (N, c)."""
    c, H, W = w.shape
    return g.transpose(1, 0, 2).reshape(-1, H * W) @ w.reshape(c, H * W).T


def project_weight_grad(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    H, N, W = g.shape
    return (x.T @ g.transpose(1, 0, 2).reshape(N, H * W)).reshape(-1, H, W)


def _cam(v: np.ndarray, M: np.ndarray) -> np.ndarray:
    # v: (H, N, d_c), M: (N, 4, 4)
    H, N, dc = v.shape
    chunks = v.reshape(H, N, dc // 4, 4)
    return np.matmul(chunks, M[None]).reshape(H, N, dc)


# -- token groups ---------------------------------------------------------------

def groups_for(grid: TokenGrid, branch: str) -> np.ndarray:
    """Index array (G, n) partitioning the flattened tokens into attention groups."""
    v, f, h, w = grid.dims
    idx = np.arange(grid.n_tokens)
    if branch == "full4d":
        return idx[None, :]
    if branch == "intra":
        return idx.reshape(v, f * h * w)
    if branch == "row":
        return idx.reshape(v, f, h, w).transpose(1, 2, 0, 3).reshape(f * h, v * w)
    raise ValueError(f"unknown branch {branch!r}")


def frame_causal_mask(grid: TokenGrid, chunk: int) -> np.ndarray:
    """(n, n) mask inside one intra-view group: key chunk <= query chunk."""
    _, f, h, w = grid.dims
    c = (np.arange(f) // chunk).repeat(h * w)
    return c[None, :] <= c[:, None]


def attend(q, k, v, scale: float, mask=None, counter: Optional[FlopCounter] = None):
    """softmax(q k^T * scale) v over the last two axes; returns (out, probs)."""
    s = matmul(q, k.swapaxes(-1, -2), counter, "scores") * scale
    p = softmax_rows(s, mask)
    return matmul(p, v, counter, "values"), p


def attend_backward(dout, q, k, v, p, scale: float):
    dv = np.matmul(p.swapaxes(-1, -2), dout)
    dp = np.matmul(dout, v.swapaxes(-1, -2))
    ds = p * (dp - np.sum(dp * p, axis=-1, keepdims=True)) * scale
    return np.matmul(ds, k), np.matmul(ds.swapaxes(-1, -2), q), dv


def output_projection(o: np.ndarray, w_o: np.ndarray) -> np.ndarray:
    H, N, dv = o.shape
    return o.transpose(1, 0, 2).reshape(N, H * dv) @ w_o.reshape(H * dv, -1)


def _logit_scale(cfg: RopeConfig, scale: Optional[float]) -> float:
    # base head dim, so that zero camera rows leave the logits untouched
    return 1.0 / math.sqrt(cfg.d) if scale is None else scale


# -- layer forward / backward -----------------------------------------------------

@dataclass
class LayerCache:
    x: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    o: np.ndarray
    branches: List[Tuple[np.ndarray, Optional[np.ndarray], np.ndarray]]
    enc: Encoding
    params: AttentionParams
    scale: float


def _branches(mode: str) -> Tuple[str, ...]:
    if mode == "stereo":
        return ("intra", "row")
    if mode in ("full4d", "intra", "row"):
        return (mode,)
    raise ValueError(f"unknown attention mode {mode!r}")


def layer_forward(x: np.ndarray, grid: TokenGrid, params: AttentionParams, cfg: RopeConfig,
                  mode: str = "stereo", enc: Optional[Encoding] = None,
                  counter: Optional[FlopCounter] = None, causal_chunk: Optional[int] = None,
                  scale: Optional[float] = None) -> Tuple[np.ndarray, LayerCache]:
    """One attention layer on flattened tokens ``x`` (N, c).

    ``grid`` supplies the token layout and cameras; its values are not read.
    ``causal_chunk`` restricts intra-view attention to keys whose frame chunk
    is not later than the query's.
    """
    if params.w_q.shape[2] != cfg.width:
        raise ValueError("projection width does not match the rope config")
    enc = enc if enc is not None else Encoding.build(grid, cfg, x.dtype)
    scale = _logit_scale(cfg, scale)
    q = enc.apply(project(x, params.w_q), "query")
    k = enc.apply(project(x, params.w_k), "key")
    v = project(x, params.w_v)
    o = np.zeros_like(v)
    branches = []
    for br in _branches(mode):
        g = groups_for(grid, br)
        mask = None
        if causal_chunk is not None and br in ("intra", "full4d"):
            if br == "full4d":
                raise ValueError("causal masking is defined for the stereo decomposition only")
            mask = frame_causal_mask(grid, causal_chunk)
        out, p = attend(q[:, g], k[:, g], v[:, g], scale, mask, counter)
        o[:, g] += out
        branches.append((g, mask, p))
    y = output_projection(o, params.w_o)
    check_finite(y, "attention output")
    return y, LayerCache(x, q, k, v, o, branches, enc, params, scale)


def layer_backward(dy: np.ndarray, cache: LayerCache) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Gradients of a :func:`layer_forward` output w.r.t. its input and weights."""
    P = cache.params
    H, N, dv = cache.o.shape
    grads = {"w_o": (cache.o.transpose(1, 0, 2).reshape(N, H * dv).T @ dy).reshape(P.w_o.shape)}
    do = (dy @ P.w_o.reshape(H * dv, -1).T).reshape(N, H, dv).transpose(1, 0, 2)
    dq = np.zeros_like(cache.q)
    dk = np.zeros_like(cache.k)
    dv = np.zeros_like(cache.v)
    for g, _, p in cache.branches:
        gq, gk, gv = attend_backward(do[:, g], cache.q[:, g], cache.k[:, g], cache.v[:, g], p, cache.scale)
        dq[:, g] += gq
        dk[:, g] += gk
        dv[:, g] += gv
    dq = cache.enc.apply_transpose(dq, "query")
    dk = cache.enc.apply_transpose(dk, "key")
    x = cache.x
    grads["w_q"] = project_weight_grad(x, dq)
    grads["w_k"] = project_weight_grad(x, dk)
    grads["w_v"] = project_weight_grad(x, dv)
    dx = project_back(dq, P.w_q) + project_back(dk, P.w_k) + project_back(dv, P.w_v)
    return dx, grads


# -- grid-level API ---------------------------------------------------------------

def _run(grid, params, cfg, mode, counter=None, **kw) -> TokenGrid:
    y, _ = layer_forward(grid.flat(), grid, params, cfg, mode, counter=counter, **kw)
    return grid.with_values(y)


def full_4d_attention(grid: TokenGrid, params: AttentionParams, cfg: RopeConfig,
                      counter: Optional[FlopCounter] = None, **kw) -> TokenGrid:
    """Joint softmax attention over every token of both views."""
    return _run(grid, params, cfg, "full4d", counter, **kw)


def intra_view_attention(grid: TokenGrid, params: AttentionParams, cfg: RopeConfig,
                         counter: Optional[FlopCounter] = None, **kw) -> TokenGrid:
    return _run(grid, params, cfg, "intra", counter, **kw)


def row_attention(grid: TokenGrid, params: AttentionParams, cfg: RopeConfig,
                  counter: Optional[FlopCounter] = None, **kw) -> TokenGrid:
    """Attention among the ``2w`` tokens sharing a frame and an image row."""
    return _run(grid, params, cfg, "row", counter, **kw)


def stereo_attention(grid: TokenGrid, params: AttentionParams, cfg: RopeConfig,
                     counter: Optional[FlopCounter] = None, **kw) -> TokenGrid:
    """Intra-view plus row attention, summed before the shared output projection."""
    return _run(grid, params, cfg, "stereo", counter, **kw)


# -- masks and the dense oracle ---------------------------------------------------

def all_pairs(q: TokenMeta, k: TokenMeta):
    return np.ones(np.broadcast(q.view, k.view).shape, dtype=bool)


def same_view(q: TokenMeta, k: TokenMeta):
    return q.view == k.view


def same_row(q: TokenMeta, k: TokenMeta):
    return (q.t == k.t) & (q.y == k.y)


def causal_frames(chunk: int = 1) -> Callable:
    def pred(q: TokenMeta, k: TokenMeta):
        return (k.t // chunk) <= (q.t // chunk)
    return pred


def both(*preds: Callable) -> Callable:
    def pred(q, k):
        out = preds[0](q, k)
        for p in preds[1:]:
            out = out & p(q, k)
        return out
    return pred


def mask_matrix(grid: TokenGrid, predicate) -> np.ndarray:
    """Evaluate a pair predicate (or pass through an (N, N) bool array)."""
    if not callable(predicate):
        m = np.asarray(predicate, dtype=bool)
        if m.shape != (grid.n_tokens, grid.n_tokens):
            raise ValueError("mask array must be (N, N)")
        return m
    meta = token_meta(grid)
    q = TokenMeta(*(a[:, None] for a in meta))
    k = TokenMeta(*(a[None, :] for a in meta))
    return np.broadcast_to(predicate(q, k), (grid.n_tokens, grid.n_tokens))


def masked_dense_oracle(grid: TokenGrid, params: AttentionParams, cfg: RopeConfig, mask,
                        scale: Optional[float] = None) -> TokenGrid:
    """Reference attention: dense logits for all pairs, excluded pairs at -inf."""
    m = mask_matrix(grid, mask)
    if not m.any(axis=1).all():
        raise ValueError("mask leaves a query with no permitted key")
    x = grid.flat()
    enc = Encoding.build(grid, cfg, x.dtype)
    q = enc.apply(project(x, params.w_q), "query")
    k = enc.apply(project(x, params.w_k), "key")
    v = project(x, params.w_v)
    logits = np.einsum("hiw,hjw->hij", q, k) * _logit_scale(cfg, scale)
    logits = np.where(m[None], logits, -np.inf)
    logits = logits - logits.max(axis=-1, keepdims=True)
    e = np.where(m[None], np.exp(logits), 0.0)
    probs = e / e.sum(axis=-1, keepdims=True)
    o = np.einsum("hij,hjd->hid", probs, v)
    return grid.with_values(np.einsum("hnd,hdc->nc", o, params.w_o))


def stereo_oracle(grid: TokenGrid, params: AttentionParams, cfg: RopeConfig,
                  causal_chunk: Optional[int] = None, **kw) -> TokenGrid:
    """Dense recomputation of (optionally frame-causal) stereo attention."""
    intra = same_view if causal_chunk is None else both(same_view, causal_frames(causal_chunk))
    a = masked_dense_oracle(grid, params, cfg, intra, **kw)
    b = masked_dense_oracle(grid, params, cfg, same_row, **kw)
    return grid.with_values(a.flat() + b.flat())


# -- causal rollout with a two-view KV cache --------------------------------------

@dataclass(frozen=True)
class KVCache:
    """Encoded keys and values of already generated chunks, one list per view.

    Entries are (heads, tokens, width) arrays whose keys already carry their
    camera-frame rotary encoding.  ``next_t`` is the first frame index a new
    chunk may start at.  ``capacity`` (in chunks) turns on rolling eviction.
    """
    keys: Tuple[Tuple[np.ndarray, ...], ...] = ((), ())
    values: Tuple[Tuple[np.ndarray, ...], ...] = ((), ())
    next_t: int = 0
    capacity: Optional[int] = None

    @property
    def steps(self) -> int:
        return len(self.keys[0])

    @property
    def n_view_chunks(self) -> int:
        return sum(len(k) for k in self.keys)

    def view_kv(self, view: int):
        return self.keys[view], self.values[view]

    def appended(self, k_views, v_views, next_t: int) -> "KVCache":
        keys = tuple(ks + (kn,) for ks, kn in zip(self.keys, k_views))
        values = tuple(vs + (vn,) for vs, vn in zip(self.values, v_views))
        if self.capacity is not None:
            keys = tuple(ks[-self.capacity:] for ks in keys)
            values = tuple(vs[-self.capacity:] for vs in values)
        return replace(self, keys=keys, values=values, next_t=next_t)


def causal_step(cache: KVCache, chunk: TokenGrid, params: AttentionParams, cfg: RopeConfig,
                counter: Optional[FlopCounter] = None,
                scale: Optional[float] = None) -> Tuple[TokenGrid, KVCache]:
    """Attend one two-view frame chunk against the cache, then cache its keys/values.

    Intra-view attention sees every cached chunk of the same view plus the
    whole current chunk; row attention stays inside the current chunk.
    """
    if chunk.views != len(cache.keys):
        raise ValueError("chunk and cache disagree on the number of views")
    if chunk.t0 < cache.next_t:
        raise ValueError(f"out-of-order chunk: starts at t={chunk.t0}, cache ends at {cache.next_t}")
    x = chunk.flat()
    enc = Encoding.build(chunk, cfg, x.dtype)
    scale = _logit_scale(cfg, scale)
    q = enc.apply(project(x, params.w_q), "query")
    k = enc.apply(project(x, params.w_k), "key")
    v = project(x, params.w_v)
    o = np.zeros_like(v)
    per_view = groups_for(chunk, "intra")
    k_views, v_views = [], []
    for view, g in enumerate(per_view):
        ck, cv = cache.view_kv(view)
        keys = np.concatenate(ck + (k[:, g],), axis=1)
        vals = np.concatenate(cv + (v[:, g],), axis=1)
        out, _ = attend(q[:, g], keys, vals, scale, None, counter)
        o[:, g] += out
        k_views.append(k[:, g])
        v_views.append(v[:, g])
    g = groups_for(chunk, "row")
    out, _ = attend(q[:, g], k[:, g], v[:, g], scale, None, counter)
    o[:, g] += out
    y = output_projection(o, params.w_o)
    check_finite(y, "attention output")
    _, f, _, _ = chunk.dims
    return chunk.with_values(y), cache.appended(k_views, v_views, chunk.t0 + f)


def causal_rollout(grid: TokenGrid, params: AttentionParams, cfg: RopeConfig, chunk: int = 1,
                   counter: Optional[FlopCounter] = None) -> Tuple[TokenGrid, KVCache]:
    """Run :func:`causal_step` over consecutive ``chunk``-frame slices of ``grid``."""
    cache = KVCache(keys=((),) * grid.views, values=((),) * grid.views, next_t=grid.t0)
    outs = []
    _, f, _, _ = grid.dims
    for s in range(0, f, chunk):
        out, cache = causal_step(cache, grid.frames(s, min(s + chunk, f)), params, cfg, counter)
        outs.append(out.values)
    return TokenGrid(np.concatenate(outs, axis=1), grid.cameras, grid.t0), cache
