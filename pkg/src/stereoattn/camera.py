"""Pinhole cameras, rectified stereo rigs and projective camera matrices.

Conventions: extrinsics map world to camera (``x_cam = R @ x_world + t``),
right-handed, camera looking down +z, image x to the right.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @classmethod
    def from_matrix(cls, K, width: int, height: int) -> "Intrinsics":
        K = np.asarray(K, dtype=np.float64).reshape(3, 3)
        return cls(float(K[0, 0]), float(K[1, 1]), float(K[0, 2]), float(K[1, 2]), width, height)


@dataclass(frozen=True)
class Extrinsics:
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6) or abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise ValueError("R must be a proper rotation")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.t

    @classmethod
    def from_matrix(cls, T) -> "Extrinsics":
        T = np.asarray(T, dtype=np.float64).reshape(4, 4)
        if not np.allclose(T[3], [0, 0, 0, 1]):
            raise ValueError("last row of a rigid transform must be [0, 0, 0, 1]")
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def look(cls, center, yaw: float = 0.0) -> "Extrinsics":
        """Camera at ``center`` rotated by ``yaw`` radians about the world y-axis."""
        R_cw = rotation_y(yaw)
        R = R_cw.T
        return cls(R, -R @ np.asarray(center, dtype=np.float64))


@dataclass(frozen=True)
class Camera:
    intrinsics: Intrinsics
    extrinsics: Extrinsics


@dataclass(frozen=True)
class StereoRig:
    left: Camera
    right: Camera
    baseline: float

    def __post_init__(self):
        if not self.baseline > 0:
            raise ValueError("baseline must be positive")
        if self.left.intrinsics != self.right.intrinsics:
            raise ValueError("rectified rig needs shared intrinsics")
        if not np.allclose(self.left.extrinsics.R, self.right.extrinsics.R, atol=1e-9):
            raise ValueError("rectified rig needs shared rotation")
        offset = self.left.extrinsics.R @ (self.right.extrinsics.center - self.left.extrinsics.center)
        if not np.allclose(offset, [self.baseline, 0.0, 0.0], atol=1e-9):
            raise ValueError("right camera must sit baseline metres along the left camera x-axis")

    @classmethod
    def rectified(cls, intrinsics: Intrinsics, left: Extrinsics, baseline: float) -> "StereoRig":
        right = Extrinsics(left.R, left.t - np.array([baseline, 0.0, 0.0]))
        return cls(Camera(intrinsics, left), Camera(intrinsics, right), float(baseline))


@dataclass(frozen=True)
class NormalizationPolicy:
    """How raw camera values are scaled before entering attention logits.

    ``normalize_intrinsics`` maps focal lengths to image-size units and the
    principal point to [-0.5, 0.5]; ``scene_scale`` (metres) divides
    translations.  ``None`` disables translation scaling.
    """
    normalize_intrinsics: bool = True
    scene_scale: Optional[float] = 20.0


RAW = NormalizationPolicy(normalize_intrinsics=False, scene_scale=None)


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def normalized_intrinsic_matrix(intr: Intrinsics, policy: NormalizationPolicy) -> np.ndarray:
    K = intr.matrix()
    if policy.normalize_intrinsics:
        K = np.array([[intr.fx / intr.width, 0.0, intr.cx / intr.width - 0.5],
                      [0.0, intr.fy / intr.height, intr.cy / intr.height - 0.5],
                      [0.0, 0.0, 1.0]])
    return K


def projective_from_matrices(K, T, scene_scale: Optional[float] = None) -> np.ndarray:
    """``[[K, 0], [0, 1]] @ T`` for raw 3x3 ``K`` and 4x4 ``T``.

    Translation scaling is applied as ``S T S^-1`` with ``S = diag(1,1,1,s)``,
    which divides the translation column of a rigid ``T`` by ``s`` and keeps
    the relative-transform algebra intact for general 4x4 ``T``.
    """
    K = np.asarray(K, dtype=np.float64).reshape(3, 3)
    T = np.asarray(T, dtype=np.float64).reshape(4, 4)
    if abs(np.linalg.det(K)) < 1e-12:
        raise np.linalg.LinAlgError("singular intrinsic matrix")
    if scene_scale is not None:
        S = np.diag([1.0, 1.0, 1.0, float(scene_scale)])
        T = S @ T @ np.diag([1.0, 1.0, 1.0, 1.0 / scene_scale])
    K4 = np.eye(4)
    K4[:3, :3] = K
    return K4 @ T


def projective_matrix(cam: Camera, normalization: NormalizationPolicy = NormalizationPolicy()) -> np.ndarray:
    K = normalized_intrinsic_matrix(cam.intrinsics, normalization)
    return projective_from_matrices(K, cam.extrinsics.matrix(), normalization.scene_scale)


def relative_transform(P1, P2, variant: str = "inverse") -> np.ndarray:
    """Camera kernel between two projective matrices: ``P1 P2^-1`` or ``P1 P2^T``."""
    P1 = np.asarray(P1, dtype=np.float64)
    P2 = np.asarray(P2, dtype=np.float64)
    if variant == "inverse":
        if abs(np.linalg.det(P2)) < 1e-12:
            raise np.linalg.LinAlgError("P2 is singular")
        return P1 @ np.linalg.inv(P2)
    if variant == "transpose":
        return P1 @ P2.T
    raise ValueError(f"unknown variant {variant!r}")


def disparity_from_depth(Z, rig: StereoRig):
    """Horizontal disparity in pixels, ``fx * baseline / Z``."""
    Z = np.asarray(Z, dtype=np.float64)
    if np.any(Z <= 0):
        raise ValueError("depth must be positive")
    d = rig.left.intrinsics.fx * rig.baseline / Z
    return float(d) if d.ndim == 0 else d


# -- trajectories -------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    frames: Tuple[Camera, ...]

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ValueError("trajectory needs at least one frame")
        object.__setattr__(self, "frames", tuple(self.frames))

    def __len__(self):
        return len(self.frames)

    def rig_at(self, i: int, baseline: float) -> StereoRig:
        cam = self.frames[i]
        return StereoRig.rectified(cam.intrinsics, cam.extrinsics, baseline)


@dataclass(frozen=True)
class TrajectoryConfig:
    z_range: Tuple[float, float] = (4.0, 20.0)
    yaw_range_deg: Tuple[float, float] = (50.0, 150.0)
    intrinsics: Intrinsics = Intrinsics(320.0, 320.0, 320.0, 240.0, 640, 480)


def _signed_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    mag = rng.uniform(lo, hi)
    sign = 1.0 if rng.integers(0, 2) else -1.0
    return sign * mag


def sample_trajectory(rng: np.random.Generator, n_frames: int,
                      cfg: TrajectoryConfig = TrajectoryConfig()) -> Trajectory:
    """Random forward/backward dolly combined with a yaw turn.

    The last frame is displaced by a signed z-translation with magnitude in
    ``cfg.z_range`` and rotated about y by a signed angle with magnitude in
    ``cfg.yaw_range_deg``; frames in between interpolate linearly in camera
    center and along the shortest rotation arc (angles stay below 180 deg).
    """
    if n_frames < 2:
        raise ValueError("n_frames must be >= 2")
    z_end = _signed_uniform(rng, *cfg.z_range)
    yaw_end = math.radians(_signed_uniform(rng, *cfg.yaw_range_deg))
    frames = []
    for i in range(n_frames):
        s = i / (n_frames - 1)
        ext = Extrinsics.look([0.0, 0.0, s * z_end], s * yaw_end)
        frames.append(Camera(cfg.intrinsics, ext))
    return Trajectory(tuple(frames))


def endpoint_motion(traj: Trajectory) -> Tuple[float, float]:
    """(z displacement in metres, yaw in degrees) of the last frame relative to the first."""
    first, last = traj.frames[0].extrinsics, traj.frames[-1].extrinsics
    dz = float(last.center[2] - first.center[2])
    R_rel = last.R.T @ first.R  # camera-to-world of last, relative to first
    yaw = math.degrees(math.atan2(R_rel[0, 2], R_rel[0, 0]))
    return dz, yaw


def trajectory_to_json(traj: Trajectory, baseline: float) -> str:
    frames = [{"K": [float(v) for v in cam.intrinsics.matrix().reshape(-1)],
               "T": [float(v) for v in cam.extrinsics.matrix().reshape(-1)]}
              for cam in traj.frames]
    # image extents are not part of the schema; they ride along for round trips
    size = traj.frames[0].intrinsics
    doc = {"baseline_m": float(baseline), "frames": frames,
           "image_size": [size.width, size.height]}
    return json.dumps(doc, indent=1)


def trajectory_from_json(text: str) -> Tuple[Trajectory, float]:
    doc = json.loads(text)
    width, height = doc.get("image_size", (None, None))
    frames = []
    for fr in doc["frames"]:
        K = np.asarray(fr["K"], dtype=np.float64).reshape(3, 3)
        if width is None:
            w, h = int(2 * K[0, 2]) + 1, int(2 * K[1, 2]) + 1
        else:
            w, h = width, height
        frames.append(Camera(Intrinsics.from_matrix(K, w, h), Extrinsics.from_matrix(fr["T"])))
    return Trajectory(tuple(frames)), float(doc["baseline_m"])
