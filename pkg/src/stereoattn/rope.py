"""Rotary position encodings: 1-D, factorized (t, x, y), and the camera-frame extension.

Vectors are rows.  A rotary transform maps ``v -> v @ R(pos)`` with
``R(pos)`` block-diagonal in 2x2 blocks ``[[cos a, sin a], [-sin a, cos a]]``,
so ``(q @ R(p1)) . (k @ R(p2)) = q @ R(p1 - p2) @ k``.

The camera extension appends ``d_c`` dimensions to queries and keys.  Those
dimensions are grouped in 4-vectors and multiplied by the token's 4x4
projective camera matrix ``P`` on the query side, and by ``P^-T`` (inverse
variant) or ``P`` (transpose variant) on the key side, which makes the camera
part of the logit ``q_cam @ (I kron P1 P2^-1) @ k_cam`` (or ``P1 P2^T``).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from .camera import relative_transform

AXES = ("t", "x", "y")


def default_partition(d: int) -> Tuple[int, int, int]:
    """Split ``d`` over (t, x, y): x and y get ``2*(d//6)`` each, t the rest."""
    share = 2 * (d // 6)
    return (d - 2 * share, share, share)


@dataclass(frozen=True)
class RopeConfig:
    d: int
    d_c: int = 0
    partition: Optional[Tuple[int, int, int]] = None
    theta_base: float = 10000.0
    variant: str = "inverse"
    enabled_axes: Tuple[str, ...] = AXES

    def __post_init__(self):
        if self.d <= 0 or self.d % 2:
            raise ValueError("d must be a positive even number")
        if self.d_c < 0 or self.d_c % 4:
            raise ValueError("d_c must be a non-negative multiple of 4")
        part = default_partition(self.d) if self.partition is None else tuple(int(p) for p in self.partition)
        if len(part) != 3 or sum(part) != self.d or any(p < 0 or p % 2 for p in part):
            raise ValueError(f"invalid partition {part} for d={self.d}")
        object.__setattr__(self, "partition", part)
        if self.variant not in ("inverse", "transpose"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not set(self.enabled_axes) <= set(AXES):
            raise ValueError(f"unknown axes in {self.enabled_axes}")
        object.__setattr__(self, "enabled_axes", tuple(self.enabled_axes))

    @property
    def width(self) -> int:
        return self.d + self.d_c

    def axis_slice(self, axis: str) -> slice:
        i = AXES.index(axis)
        start = sum(self.partition[:i])
        return slice(start, start + self.partition[i])

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "RopeConfig":
        unknown = set(doc) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown RopeConfig keys: {sorted(unknown)}")
        doc = dict(doc)
        if doc.get("partition") is not None:
            doc["partition"] = tuple(doc["partition"])
        if "enabled_axes" in doc:
            doc["enabled_axes"] = tuple(doc["enabled_axes"])
        return cls(**doc)


def rope_frequencies(d_axis: int, theta_base: float = 10000.0) -> np.ndarray:
    """theta_n = base^(-2n/d_axis) for n = 0 .. d_axis/2 - 1."""
    n = np.arange(d_axis // 2, dtype=np.float64)
    return theta_base ** (-2.0 * n / d_axis)


def _rotate_pairs(v: np.ndarray, angles: np.ndarray) -> np.ndarray:
    # v: (..., 2m), angles broadcastable to (..., m)
    cos = np.cos(angles).astype(v.dtype, copy=False)
    sin = np.sin(angles).astype(v.dtype, copy=False)
    even, odd = v[..., 0::2], v[..., 1::2]
    out = np.empty_like(v)
    out[..., 0::2] = even * cos - odd * sin
    out[..., 1::2] = even * sin + odd * cos
    return out


def rope_1d(v, pos, cfg: Optional[RopeConfig] = None, *, theta: Optional[np.ndarray] = None) -> np.ndarray:
    """Rotate consecutive pairs (2n, 2n+1) of the last axis by ``pos * theta_n``.

    ``pos`` may be a scalar or an array broadcasting against ``v.shape[:-1]``.
    Frequencies come from ``theta`` if given, else from ``cfg.theta_base``.
    """
    v = np.asarray(v)
    if v.shape[-1] % 2:
        raise ValueError("rope_1d needs an even last dimension")
    if theta is None:
        base = cfg.theta_base if cfg is not None else 10000.0
        theta = rope_frequencies(v.shape[-1], base)
    angles = np.asarray(pos, dtype=np.float64)[..., None] * np.asarray(theta, dtype=np.float64)
    return _rotate_pairs(v, angles)


@dataclass(frozen=True)
class TokenPosition:
    view: int
    t: int
    x: int
    y: int
    camera: Optional[np.ndarray] = None  # 4x4 projective matrix of (view, t)


def _axis_angles(cfg: RopeConfig, t, x, y) -> np.ndarray:
    """Rotation angles for the d rotary dims, shape (..., d/2)."""
    pos = {"t": np.asarray(t, dtype=np.float64), "x": np.asarray(x, dtype=np.float64),
           "y": np.asarray(y, dtype=np.float64)}
    shape = np.broadcast(pos["t"], pos["x"], pos["y"]).shape
    parts = []
    for axis, size in zip(AXES, cfg.partition):
        if size == 0:
            continue
        p = pos[axis] if axis in cfg.enabled_axes else np.zeros(shape)
        p = np.broadcast_to(p, shape)
        parts.append(p[..., None] * rope_frequencies(size, cfg.theta_base))
    return np.concatenate(parts, axis=-1)


def rope_3d(v, t, x, y, cfg: RopeConfig) -> np.ndarray:
    """Factorized video RoPE on the first ``cfg.d`` dims of ``v``.

    Each axis owns a disjoint, contiguous slice of dims (t first, then x, y)
    and rotates it with its own 1-D frequencies.
    """
    v = np.asarray(v)
    if v.shape[-1] != cfg.d:
        raise ValueError(f"expected last dim {cfg.d}, got {v.shape[-1]}")
    for name, p in (("t", t), ("x", x), ("y", y)):
        if np.any(np.asarray(p) < 0):
            raise ValueError(f"negative {name} position")
    return _rotate_pairs(v, _axis_angles(cfg, t, x, y))


def camera_block(P, d_c: int) -> np.ndarray:
    """``I_{d_c/4} kron P``: ``d_c/4`` copies of a 4x4 matrix on the diagonal."""
    if d_c % 4:
        raise ValueError("d_c must be divisible by 4")
    return np.kron(np.eye(d_c // 4), np.asarray(P, dtype=np.float64))


def key_camera_matrix(P, variant: str) -> np.ndarray:
    """4x4 matrix that multiplies key camera chunks: ``P^-T`` or ``P``."""
    P = np.asarray(P, dtype=np.float64)
    if variant == "inverse":
        return np.linalg.inv(P).swapaxes(-1, -2)
    return P


def apply_camera(v_cam: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Multiply each 4-chunk of the last axis (row vector) by ``M`` (..., 4, 4)."""
    shp = v_cam.shape
    chunks = v_cam.reshape(shp[:-1] + (shp[-1] // 4, 4))
    out = np.einsum("...ci,...ij->...cj", chunks, np.asarray(M, dtype=v_cam.dtype))
    return out.reshape(shp)


def unified_apply(v, pos: TokenPosition, cfg: RopeConfig, side: str) -> np.ndarray:
    """Encode one query or key of width ``d + d_c`` at ``pos``."""
    v = np.asarray(v)
    if v.shape[-1] != cfg.width:
        raise ValueError(f"expected width {cfg.width}, got {v.shape[-1]}")
    if side not in ("query", "key"):
        raise ValueError("side must be 'query' or 'key'")
    out = np.empty_like(v)
    out[..., :cfg.d] = rope_3d(v[..., :cfg.d], pos.t, pos.x, pos.y, cfg)
    if cfg.d_c:
        if pos.camera is None:
            raise ValueError("camera required when d_c > 0")
        M = pos.camera if side == "query" else key_camera_matrix(pos.camera, cfg.variant)
        out[..., cfg.d:] = apply_camera(v[..., cfg.d:], M)
    return out


def rotary_matrix(pos: TokenPosition, cfg: RopeConfig) -> np.ndarray:
    """Explicit d x d block-diagonal rotation for ``pos`` (row-vector convention)."""
    angles = _axis_angles(cfg, pos.t, pos.x, pos.y)
    R = np.zeros((cfg.d, cfg.d))
    for n, a in enumerate(angles):
        c, s = np.cos(a), np.sin(a)
        R[2 * n:2 * n + 2, 2 * n:2 * n + 2] = [[c, s], [-s, c]]
    return R


def unified_logit(q, k, pos_q: TokenPosition, pos_k: TokenPosition, cfg: RopeConfig) -> float:
    """Slow reference logit ``q @ R~(pos_q, pos_k) @ k`` built from explicit matrices."""
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    d, dc = cfg.d, cfg.d_c
    kernel = np.zeros((cfg.width, cfg.width))
    kernel[:d, :d] = rotary_matrix(pos_q, cfg) @ rotary_matrix(pos_k, cfg).T
    if dc:
        if pos_q.camera is None or pos_k.camera is None:
            raise ValueError("camera required when d_c > 0")
        kernel[d:, d:] = camera_block(relative_transform(pos_q.camera, pos_k.camera, cfg.variant), dc)
    return float(q @ kernel @ k)
