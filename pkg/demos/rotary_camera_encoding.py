"""
Rotary positions with a camera block
====================================

Queries and keys get two encodings.  The first ``d`` dims rotate by their
(t, x, y) grid position, so logits only see position differences.  The last
``d_c`` dims are multiplied by the camera's projective matrix, so logits only
see the relative transform between the two cameras.
"""
import numpy as np

from stereoattn.camera import projective_from_matrices, relative_transform
from stereoattn.kernels import make_rng
from stereoattn.rope import RopeConfig, TokenPosition, rope_3d, unified_apply

rng = make_rng(0)
cfg = RopeConfig(d=24, d_c=8)
print("axis split (t, x, y):", cfg.partition)

# %%
# Moving both tokens by the same amount along any axis keeps the logit.
q, k = rng.standard_normal((2, 24))
base = RopeConfig(d=24)
a = rope_3d(q, 2, 5, 1, base) @ rope_3d(k, 0, 3, 4, base)
b = rope_3d(q, 9, 5, 1, base) @ rope_3d(k, 7, 3, 4, base)
print("time shift changes the logit by", abs(a - b))


# %%
# Two cameras, then the same pair seen from a different world frame.
def rigid(angle, t):
    c, s = np.cos(angle), np.sin(angle)
    T = np.eye(4)
    T[:3, :3] = [[c, 0, s], [0, 1, 0], [-s, 0, c]]
    T[:3, 3] = t
    return T


K = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1]])
T1, T2 = rigid(0.1, [0, 0, 0]), rigid(-0.3, [0.5, 0, 0.2])
G = rigid(0.7, [3, -1, 2])

q, k = rng.standard_normal((2, cfg.width))


def logit(Ta, Tb):
    pq = TokenPosition(0, 1, 2, 3, projective_from_matrices(K, Ta))
    pk = TokenPosition(1, 1, 2, 3, projective_from_matrices(K, Tb))
    return unified_apply(q, pq, cfg, "query") @ unified_apply(k, pk, cfg, "key")


print("logit in the original frame:", logit(T1, T2))
print("logit after moving the world:", logit(T1 @ G, T2 @ G))
print("relative transform P1 P2^-1:\n", np.round(relative_transform(T1, T2), 4))

# %%
# The literal-transpose key variant loses that invariance once the shared
# transform is not orthogonal.
tcfg = RopeConfig(d=24, d_c=8, variant="transpose")
S = np.diag([2.0, 1.0, 1.0, 1.0])
pq = TokenPosition(0, 0, 0, 0, T1)
pk = TokenPosition(1, 0, 0, 0, T2)
before = unified_apply(q, pq, tcfg, "query") @ unified_apply(k, pk, tcfg, "key")
pq, pk = TokenPosition(0, 0, 0, 0, T1 @ S), TokenPosition(1, 0, 0, 0, T2 @ S)
after = unified_apply(q, pq, tcfg, "query") @ unified_apply(k, pk, tcfg, "key")
print("transpose variant, before/after a scaled world:", before, after)
