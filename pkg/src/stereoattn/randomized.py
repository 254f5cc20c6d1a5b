"""Random grids, rigs and parameters for property checks."""
from __future__ import annotations

import math

import numpy as np

from .attention import AttentionParams, TokenGrid
from .camera import Extrinsics, Intrinsics, NormalizationPolicy, StereoRig, projective_matrix
from .rope import RopeConfig


def random_rig_cameras(rng: np.random.Generator, f: int, width: int = 64, height: int = 64,
                       policy: NormalizationPolicy = NormalizationPolicy()) -> np.ndarray:
    """(2, f, 4, 4) projective matrices of a rectified rig moving along a random path."""
    fx = rng.uniform(0.6, 1.4) * width
    intr = Intrinsics(fx, fx, width / 2, height / 2, width, height)
    baseline = rng.uniform(0.05, 0.5)
    start = rng.uniform(-2, 2, 3)
    step = rng.uniform(-0.5, 0.5, 3)
    yaw0, dyaw = rng.uniform(-math.pi, math.pi), rng.uniform(-0.2, 0.2)
    out = np.empty((2, f, 4, 4))
    for t in range(f):
        rig = StereoRig.rectified(intr, Extrinsics.look(start + t * step, yaw0 + t * dyaw), baseline)
        out[0, t] = projective_matrix(rig.left, policy)
        out[1, t] = projective_matrix(rig.right, policy)
    return out


def random_grid(rng: np.random.Generator, f: int, h: int, w: int, c: int, dtype=np.float64,
                views: int = 2) -> TokenGrid:
    cams = random_rig_cameras(rng, f)[:views]
    return TokenGrid(rng.standard_normal((views, f, h, w, c)).astype(dtype), cams)


def random_params(rng: np.random.Generator, c: int, heads: int, cfg: RopeConfig, dtype=np.float64):
    return AttentionParams.init(rng, c, heads, cfg, dtype=dtype)
