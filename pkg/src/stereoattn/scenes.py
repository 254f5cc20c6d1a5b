"""Synthetic rectified-stereo videos with exact ground-truth disparity.

A scene is a stack of fronto-parallel textured planes seen by a stereo rig
that pans sideways.  Textures live in "reference pixel" plane coordinates
``(a, b) = (fx X / Z, fy Y / Z)``, so a camera shift of ``dx`` metres moves a
plane at depth ``Z`` by exactly ``fx dx / Z`` pixels and the right view is
the left view sampled ``d = fx * baseline / Z`` pixels further right.
Textures are finite sums of sinusoids, so sub-pixel shifts are exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .camera import (Camera, Extrinsics, Intrinsics, NormalizationPolicy, StereoRig, Trajectory,
                     projective_matrix)


@dataclass(frozen=True)
class SceneConfig:
    f: int = 4
    h: int = 8
    w: int = 8
    channels: int = 1
    depth_range: Tuple[float, float] = (1.0, 4.0)
    n_layers: Tuple[int, int] = (1, 1)
    baseline: float = 0.5
    focal_scale: float = 1.0
    pan_per_frame: float = 0.1
    n_waves: int = 6
    freq_range: Tuple[float, float] = (0.04, 0.3)

    def __post_init__(self):
        lo, hi = self.depth_range
        if not (1.0 <= lo <= hi <= 20.0):
            raise ValueError("depths must lie within [1, 20] m")
        if not (1 <= self.n_layers[0] <= self.n_layers[1] <= 3):
            raise ValueError("scenes have 1 to 3 layers")

    @property
    def intrinsics(self) -> Intrinsics:
        fx = self.focal_scale * self.w
        return Intrinsics(fx, fx, self.w / 2, self.h / 2, self.w, self.h)


@dataclass(frozen=True)
class Texture:
    """Sum of cosines with unit total variance."""
    kx: np.ndarray
    ky: np.ndarray
    phase: np.ndarray
    amp: np.ndarray  # (n_waves, channels)

    @classmethod
    def random(cls, rng: np.random.Generator, n_waves: int, freq_range, channels: int) -> "Texture":
        mag = rng.uniform(*freq_range, n_waves)
        ang = rng.uniform(0, np.pi, n_waves)
        amp = rng.uniform(0.5, 1.0, (n_waves, channels))
        amp = amp / np.sqrt(0.5 * np.sum(amp ** 2, axis=0, keepdims=True))
        return cls(mag * np.cos(ang), mag * np.sin(ang), rng.uniform(0, 2 * np.pi, n_waves), amp)

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        arg = 2 * np.pi * (a[..., None] * self.kx + b[..., None] * self.ky) + self.phase
        return np.cos(arg) @ self.amp


@dataclass(frozen=True)
class Layer:
    depth: float
    texture: Texture
    # half-open support [a0, a1) x [b0, b1) in reference pixel coordinates; None = unbounded
    support: Optional[Tuple[float, float, float, float]] = None

    def covers(self, a, b):
        if self.support is None:
            return np.ones(np.broadcast(a, b).shape, dtype=bool)
        a0, a1, b0, b1 = self.support
        return (a >= a0) & (a < a1) & (b >= b0) & (b < b1)


@dataclass
class SyntheticScene:
    layers: Tuple[Layer, ...]
    rig_intrinsics: Intrinsics
    baseline: float
    trajectory: Trajectory
    video: np.ndarray          # (2, f, h, w, channels)
    gt_disparity: np.ndarray   # (f, h, w) for the left view, pixels
    layer_index: np.ndarray    # (2, f, h, w) visible layer per pixel

    @property
    def depths(self) -> Tuple[float, ...]:
        return tuple(l.depth for l in self.layers)

    def rig(self, t: int = 0) -> StereoRig:
        return self.trajectory.rig_at(t, self.baseline)

    def cameras(self, policy: NormalizationPolicy = NormalizationPolicy()) -> np.ndarray:
        """(2, f, 4, 4) projective matrices of left and right cameras per frame."""
        f = len(self.trajectory)
        out = np.empty((2, f, 4, 4))
        for t in range(f):
            rig = self.rig(t)
            out[0, t] = projective_matrix(rig.left, policy)
            out[1, t] = projective_matrix(rig.right, policy)
        return out


def render(layers, intr: Intrinsics, baseline: float, trajectory: Trajectory, channels: int):
    """Render both views of every frame; returns (video, gt_disparity, layer_index)."""
    order = sorted(range(len(layers)), key=lambda i: layers[i].depth)
    f, h, w = len(trajectory), intr.height, intr.width
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    video = np.zeros((2, f, h, w, channels))
    index = np.full((2, f, h, w), -1)
    for t, cam in enumerate(trajectory.frames):
        px, py, _ = cam.extrinsics.center
        for view, ox in enumerate((0.0, baseline)):
            filled = np.zeros((h, w), dtype=bool)
            for i in order:
                L = layers[i]
                a = u - intr.cx + intr.fx * (px + ox) / L.depth
                b = v - intr.cy + intr.fy * py / L.depth
                hit = L.covers(a, b) & ~filled
                video[view, t][hit] = L.texture(a[hit], b[hit])
                index[view, t][hit] = i
                filled |= hit
            if not filled.all():
                raise ValueError("farthest layer must cover the whole image")
    depth = np.array([l.depth for l in layers])[index[0]]
    return video, intr.fx * baseline / depth, index


def generate_scene(rng: np.random.Generator, cfg: SceneConfig = SceneConfig(),
                   depths: Optional[List[float]] = None) -> SyntheticScene:
    """Random layered scene; ``depths`` overrides the sampled plane depths."""
    if depths is None:
        n = int(rng.integers(cfg.n_layers[0], cfg.n_layers[1] + 1))
        # uniform in inverse depth, so disparities spread evenly over their range
        lo, hi = cfg.depth_range
        depths = sorted((1.0 / rng.uniform(1.0 / hi, 1.0 / lo, n)).tolist(), reverse=True)
    depths = [float(z) for z in depths]
    if len(set(depths)) != len(depths):
        raise ValueError("layers at equal depth have ambiguous occlusion order")
    if any(z < 1.0 or z > 20.0 for z in depths):
        raise ValueError("depths must lie within [1, 20] m")
    far = max(depths)
    layers = []
    for z in depths:
        tex = Texture.random(rng, cfg.n_waves, cfg.freq_range, cfg.channels)
        support = None
        if z != far:
            a0 = float(rng.integers(-cfg.w // 2, 0))
            b0 = float(rng.integers(-cfg.h // 2, 0))
            support = (a0, a0 + float(rng.integers(2, cfg.w // 2 + 2)),
                       b0, b0 + float(rng.integers(2, cfg.h // 2 + 2)))
        layers.append(Layer(z, tex, support))
    intr = cfg.intrinsics
    pan = rng.uniform(-cfg.pan_per_frame, cfg.pan_per_frame, 2)
    frames = tuple(Camera(intr, Extrinsics(np.eye(3), -np.array([pan[0] * t, pan[1] * t, 0.0])))
                   for t in range(cfg.f))
    traj = Trajectory(frames)
    video, disp, index = render(layers, intr, cfg.baseline, traj, cfg.channels)
    return SyntheticScene(tuple(layers), intr, cfg.baseline, traj, video, disp, index)
