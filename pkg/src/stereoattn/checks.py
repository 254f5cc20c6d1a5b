"""Named property suites behind ``stereoattn check``.

Each suite runs a fixed set of properties at small sizes and returns one
:class:`PropertyResult` per property.  ``faults`` swaps in deliberately broken
implementations so the suites can be shown to catch them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Tuple

import numpy as np

from .attention import (AttentionParams, TokenGrid, TokenMeta, all_pairs, causal_rollout, full_4d_attention,
                        intra_view_attention, layer_backward, layer_forward, masked_dense_oracle, row_attention,
                        same_row, same_view, stereo_attention, stereo_oracle)
from .camera import (Extrinsics, Intrinsics, StereoRig, disparity_from_depth, endpoint_motion,
                     projective_from_matrices, relative_transform, sample_trajectory, trajectory_from_json,
                     trajectory_to_json)
from .kernels import fd_gradient, make_rng
from .randomized import random_grid, random_params
from .rope import RopeConfig, TokenPosition, rope_1d, rope_3d, unified_apply, unified_logit

FAULTS = ("row-mask-widened",)


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _bound(name: str, value: float, tol: float) -> PropertyResult:
    ok = bool(np.isfinite(value) and value <= tol)
    return PropertyResult(name, ok, f"{value:.3e} <= {tol:.0e}")


def _flag(name: str, ok: bool, detail: str = "") -> PropertyResult:
    return PropertyResult(name, bool(ok), detail or ("holds" if ok else "violated"))


def rigid(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    T = np.eye(4)
    T[:3, :3], T[:3, 3] = q, rng.uniform(-1, 1, 3)
    return T


def random_intrinsic(rng: np.random.Generator) -> np.ndarray:
    return np.array([[rng.uniform(0.5, 1.5), 0, rng.uniform(-0.3, 0.3)],
                     [0, rng.uniform(0.5, 1.5), rng.uniform(-0.3, 0.3)], [0, 0, 1]])


# -- rope ----------------------------------------------------------------------------

def rope_shift_error(rng: np.random.Generator, cfg: RopeConfig, axis: int, cases: int) -> float:
    """Largest logit change when both positions move by the same offset along ``axis``."""
    worst = 0.0
    for _ in range(cases):
        q, k = rng.standard_normal((2, cfg.d))
        p1, p2 = rng.integers(0, 64, 3), rng.integers(0, 64, 3)
        s = np.zeros(3, int)
        s[axis] = rng.integers(1, 64)
        a = rope_3d(q, *p1, cfg) @ rope_3d(k, *p2, cfg)
        b = rope_3d(q, *(p1 + s), cfg) @ rope_3d(k, *(p2 + s), cfg)
        worst = max(worst, abs(a - b))
    return worst


def world_frame_error(rng: np.random.Generator, cfg: RopeConfig, cases: int) -> float:
    """Largest relative logit change under a shared invertible world transform."""
    worst = 0.0
    for _ in range(cases):
        q, k = rng.standard_normal((2, cfg.width))
        K1, K2 = random_intrinsic(rng), random_intrinsic(rng)
        T1, T2 = rigid(rng), rigid(rng)
        G = rigid(rng) @ np.diag([*rng.uniform(0.5, 2.0, 3), 1.0])
        p1, p2 = rng.integers(0, 16, 3), rng.integers(0, 16, 3)
        ref = unified_logit(q, k, TokenPosition(0, *p1, projective_from_matrices(K1, T1)),
                            TokenPosition(1, *p2, projective_from_matrices(K2, T2)), cfg)
        moved = unified_logit(q, k, TokenPosition(0, *p1, projective_from_matrices(K1, T1 @ G)),
                              TokenPosition(1, *p2, projective_from_matrices(K2, T2 @ G)), cfg)
        worst = max(worst, abs(moved - ref) / max(1.0, abs(ref)))
    return worst


def _rope_suite(rng, faults) -> List[PropertyResult]:
    out = []
    theta = np.array([1.0, 0.1])
    qs, ks = rng.standard_normal((2, 50, 4))
    err = max(abs(rope_1d(q, m, theta=theta) @ rope_1d(k, n, theta=theta)
                  - rope_1d(q, m + s, theta=theta) @ rope_1d(k, n + s, theta=theta))
              for q, k, (m, n, s) in zip(qs, ks, rng.integers(0, 100, (50, 3))))
    out.append(_bound("rope_1d relative position", err, 1e-9))
    cfg = RopeConfig(d=24, d_c=8)
    norms = max(abs(np.linalg.norm(rope_3d(x, *rng.integers(0, 99, 3), RopeConfig(d=24)))
                    - np.linalg.norm(x)) for x in rng.standard_normal((50, 24)))
    out.append(_bound("rope_3d preserves norm", norms, 1e-12))
    for axis, name in enumerate("txy"):
        out.append(_bound(f"shift invariance along {name}", rope_shift_error(rng, RopeConfig(d=24), axis, 200),
                          1e-6))
    out.append(_bound("world-frame invariance (inverse)", world_frame_error(rng, cfg, 200), 1e-6))
    worst = 0.0
    for variant in ("inverse", "transpose"):
        c = RopeConfig(d=12, d_c=8, variant=variant)
        for _ in range(50):
            q, k = rng.standard_normal((2, c.width))
            pq = TokenPosition(0, *rng.integers(0, 9, 3), projective_from_matrices(random_intrinsic(rng), rigid(rng)))
            pk = TokenPosition(1, *rng.integers(0, 9, 3), projective_from_matrices(random_intrinsic(rng), rigid(rng)))
            fast = unified_apply(q, pq, c, "query") @ unified_apply(k, pk, c, "key")
            worst = max(worst, abs(fast - unified_logit(q, k, pq, pk, c)) / max(1.0, abs(fast)))
    out.append(_bound("fast path matches explicit rotation oracle", worst, 1e-10))
    worst = 0.0
    for _ in range(50):
        q, k = rng.standard_normal((2, cfg.width))
        q[cfg.d:] = 0
        pq = TokenPosition(0, *rng.integers(0, 9, 3), projective_from_matrices(random_intrinsic(rng), rigid(rng)))
        pk = TokenPosition(1, *rng.integers(0, 9, 3), projective_from_matrices(random_intrinsic(rng), rigid(rng)))
        base = rope_3d(q[:cfg.d], pq.t, pq.x, pq.y, RopeConfig(d=cfg.d)) @ rope_3d(k[:cfg.d], pk.t, pk.x, pk.y,
                                                                                  RopeConfig(d=cfg.d))
        worst = max(worst, abs(unified_apply(q, pq, cfg, "query") @ unified_apply(k, pk, cfg, "key") - base))
    out.append(_bound("zeroed query camera dims give base logit", worst, 1e-12))
    broken = world_frame_error(rng, RopeConfig(d=12, d_c=8, variant="transpose"), 20)
    out.append(_flag("transpose variant is not world-frame invariant", broken > 1e-6, f"{broken:.3e} > 1e-06"))
    return out


# -- attention -------------------------------------------------------------------------

def widened_row_attention(grid: TokenGrid, params: AttentionParams, cfg: RopeConfig, **kw) -> TokenGrid:
    """Broken row branch for fault injection: also attends to the rows just above and below."""
    def near_row(q: TokenMeta, k: TokenMeta):
        return (q.t == k.t) & (np.abs(q.y - k.y) <= 1)
    return masked_dense_oracle(grid, params, cfg, near_row)


def branch_implementations(faults: Iterable[str] = ()) -> Dict[str, Tuple[Callable, Callable]]:
    """branch name -> (implementation under test, oracle mask predicate)."""
    faults = frozenset(faults)
    unknown = faults - set(FAULTS)
    if unknown:
        raise ValueError(f"unknown fault {sorted(unknown)}")
    row = widened_row_attention if "row-mask-widened" in faults else row_attention
    return {"intra": (intra_view_attention, same_view), "row": (row, same_row),
            "full4d": (full_4d_attention, all_pairs)}


def oracle_error(grid, params, cfg, fn, mask) -> float:
    return float(np.max(np.abs(fn(grid, params, cfg).values - masked_dense_oracle(grid, params, cfg, mask).values)))


def _attention_suite(rng, faults) -> List[PropertyResult]:
    out = []
    impl = branch_implementations(faults)
    cfg = RopeConfig(d=8, d_c=8)
    shapes = [(1, 1, 1), (2, 2, 3), (3, 2, 2), (1, 4, 4), (2, 3, 1)]
    for dtype, tol, tag in ((np.float64, 1e-9, "f64"), (np.float32, 1e-5, "f32")):
        for branch, (fn, mask) in impl.items():
            worst = 0.0
            for f, h, w in shapes:
                grid = random_grid(rng, f, h, w, 6, dtype)
                params = random_params(rng, 6, 2, cfg, dtype)
                worst = max(worst, oracle_error(grid, params, cfg, fn, mask))
            out.append(_bound(f"{branch} matches masked dense oracle ({tag})", worst, tol))
    grid, params = random_grid(rng, 2, 2, 3, 6), random_params(rng, 6, 2, cfg)
    row_fn = impl["row"][0]
    total = intra_view_attention(grid, params, cfg).values + row_fn(grid, params, cfg).values
    out.append(_bound("stereo output is the sum of both branches",
                      float(np.max(np.abs(stereo_attention(grid, params, cfg).values - total))), 1e-12))
    swapped = TokenGrid(grid.values[::-1].copy(), grid.cameras[::-1].copy())
    a = full_4d_attention(grid, params, cfg).values
    b = full_4d_attention(swapped, params, cfg).values[::-1]
    out.append(_bound("full4d equivariant to swapping views", float(np.max(np.abs(a - b))), 1e-12))
    probe = grid.values.copy()
    probe[:, :, 1:] += rng.standard_normal(probe[:, :, 1:].shape)
    moved = TokenGrid(probe, grid.cameras)
    diff = row_fn(moved, params, cfg).values - row_fn(grid, params, cfg).values
    out.append(_bound("row branch ignores other rows", float(np.max(np.abs(diff[:, :, 0]))), 1e-12))
    grid = random_grid(rng, 4, 2, 2, 6, np.float32)
    params = random_params(rng, 6, 2, cfg, np.float32)
    rolled, cache = causal_rollout(grid, params, cfg, chunk=1)
    ref = stereo_oracle(grid, params, cfg, causal_chunk=1).values
    out.append(_bound("kv-cache rollout matches causal recompute (f32)",
                      float(np.max(np.abs(rolled.values - ref))), 1e-5))
    out.append(_flag("kv cache holds both views per step", cache.n_view_chunks == 2 * cache.steps == 8,
                     f"{cache.n_view_chunks} view chunks over {cache.steps} steps"))
    return out


# -- camera ----------------------------------------------------------------------------

def _camera_suite(rng, faults) -> List[PropertyResult]:
    out = []
    intr = Intrinsics(1.0, 1.0, 0.0, 0.0, 8, 8)
    b = float(rng.uniform(0.05, 1.0))
    rig = StereoRig.rectified(intr, Extrinsics(), b)
    rel = relative_transform(projective_from_matrices(np.eye(3), rig.left.extrinsics.matrix()),
                             projective_from_matrices(np.eye(3), rig.right.extrinsics.matrix()))
    expected = np.eye(4)
    expected[0, 3] = b
    out.append(_bound("rectified rig relative transform is +b along x", float(np.max(np.abs(rel - expected))),
                      1e-12))
    worst = 0.0
    for _ in range(50):
        T1, T2 = rigid(rng), rigid(rng)
        R1, t1, R2, t2 = T1[:3, :3], T1[:3, 3], T2[:3, :3], T2[:3, 3]
        hand = np.eye(4)
        hand[:3, :3], hand[:3, 3] = R1 @ R2.T, t1 - R1 @ R2.T @ t2
        worst = max(worst, float(np.max(np.abs(relative_transform(T1, T2) - hand))))
    out.append(_bound("relative transform equals rigid composition", worst, 1e-12))
    worst = 0.0
    for _ in range(50):
        K1, K2, T1, T2 = random_intrinsic(rng), random_intrinsic(rng), rigid(rng), rigid(rng)
        G = rng.standard_normal((4, 4)) + 3 * np.eye(4)
        for s in (None, 20.0):
            base = relative_transform(projective_from_matrices(K1, T1, s), projective_from_matrices(K2, T2, s))
            moved = relative_transform(projective_from_matrices(K1, T1 @ G, s),
                                       projective_from_matrices(K2, T2 @ G, s))
            worst = max(worst, float(np.max(np.abs(moved - base)) / max(1.0, np.max(np.abs(base)))))
    out.append(_bound("relative transform world-frame invariant", worst, 1e-9))
    fx, Z = rng.uniform(50, 500), rng.uniform(1, 50)
    rig = StereoRig.rectified(Intrinsics(fx, fx, 0.0, 0.0, 64, 64), Extrinsics(), b)
    out.append(_bound("disparity equals fx*b/Z", abs(disparity_from_depth(Z, rig) - fx * b / Z), 1e-9))
    dz, yaw, signs = [], [], set()
    for _ in range(500):
        z, a = endpoint_motion(sample_trajectory(rng, 2))
        dz.append(abs(z))
        yaw.append(abs(a))
        signs.add(math.copysign(1, a))
    ok = 4 <= min(dz) and max(dz) <= 20 and 50 <= min(yaw) and max(yaw) <= 150 and len(signs) == 2
    out.append(_flag("trajectory endpoints inside sampling ranges", ok,
                     f"|dz| in [{min(dz):.2f}, {max(dz):.2f}], |yaw| in [{min(yaw):.1f}, {max(yaw):.1f}]"))
    seed = int(rng.integers(2**32))
    text = trajectory_to_json(sample_trajectory(make_rng(seed), 7), 0.063)
    again = trajectory_to_json(sample_trajectory(make_rng(seed), 7), 0.063)
    back = trajectory_to_json(*trajectory_from_json(text))
    out.append(_flag("trajectory json regenerates and round-trips exactly", text == again == back))
    return out


# -- gradients ---------------------------------------------------------------------------

def layer_gradient_check(grid: TokenGrid, params: AttentionParams, cfg: RopeConfig, mode: str,
                         rng: np.random.Generator, n_probes: int = 10, eps: float = 1e-6) -> float:
    """Max relative error of layer_backward parameter gradients at random probes."""
    x = grid.flat()
    gy = rng.standard_normal((x.shape[0], params.w_o.shape[-1]))
    _, cache = layer_forward(x, grid, params, cfg, mode)
    _, grads = layer_backward(gy, cache)
    names = sorted(params.as_dict())
    worst = 0.0
    for _ in range(n_probes):
        name = names[int(rng.integers(len(names)))]
        arr = params.as_dict()[name]
        i = int(rng.integers(arr.size))

        def loss(a, name=name):
            p = AttentionParams(**dict(params.as_dict(), **{name: a}))
            return float(np.sum(layer_forward(x, grid, p, cfg, mode)[0] * gy))

        num = float(fd_gradient(loss, arr, eps, indices=[i]).reshape(-1)[i])
        ana = float(grads[name].reshape(-1)[i])
        worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), 1e-8))
    return worst


def _grad_suite(rng, faults) -> List[PropertyResult]:
    from .dit import ToyModelConfig, ToyStereoDiT, backward_check, model_input
    from .randomized import random_rig_cameras

    out = []
    cfg = RopeConfig(d=8, d_c=8)
    for mode in ("stereo", "full4d"):
        grid, params = random_grid(rng, 2, 2, 2, 4), random_params(rng, 4, 2, cfg)
        out.append(_bound(f"{mode} layer gradients match finite differences",
                          layer_gradient_check(grid, params, cfg, mode, rng), 1e-4))
    mcfg = ToyModelConfig(layers=2, heads=2, d=16, d_c=4, width=16, grid=(2, 3, 3))
    model = ToyStereoDiT.create(mcfg, int(rng.integers(2**32)), np.float64)
    for p in model.params.values():
        p += rng.standard_normal(p.shape) * 0.05
    z = rng.standard_normal((2, *mcfg.grid, 1))
    x, t, cams = model_input(z, z[:, 0]), float(rng.uniform()), random_rig_cameras(rng, mcfg.grid[0])
    rep = backward_check(model, x, t, cams, rng, n_probes=20)
    out.append(_bound("toy model gradients match finite differences", rep.max_rel_error, 1e-4))
    rep = backward_check(model, x, t, cams, rng, n_probes=10, eps=1e-3, names=["out.w", "out.b"])
    out.append(_bound("linear head gradients exact", rep.max_rel_error, 1e-9))
    return out


SUITES: Dict[str, Callable] = {"rope": _rope_suite, "attention": _attention_suite, "camera": _camera_suite,
                               "grad": _grad_suite}


def run_suite(name: str, seed: int = 0, faults: Iterable[str] = ()) -> List[PropertyResult]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    faults = frozenset(faults)
    branch_implementations(faults)  # validates fault names
    return SUITES[name](make_rng(seed, 7), faults)
