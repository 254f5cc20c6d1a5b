"""
Random stereo camera trajectories
=================================

Each trajectory starts at the identity pose and moves linearly to an endpoint
with a z translation of 4 to 20 m and a yaw of 50 to 150 degrees, either sign.
A rectified right camera sits one baseline to the left camera's +x.
"""
import numpy as np

from stereoattn.camera import endpoint_motion, sample_trajectory, trajectory_to_json
from stereoattn.kernels import make_rng

traj = sample_trajectory(make_rng(1), 49)
dz, yaw = endpoint_motion(traj)
print(f"49 frames, endpoint dz={dz:.2f} m yaw={yaw:.1f} deg")

rig = traj.rig_at(10, baseline=0.063)
print("frame 10 left center", np.round(rig.left.extrinsics.center, 3))
print("frame 10 right center", np.round(rig.right.extrinsics.center, 3))

# %%
# Same seed, same bytes.
a = trajectory_to_json(sample_trajectory(make_rng(7), 5), 0.063)
b = trajectory_to_json(sample_trajectory(make_rng(7), 5), 0.063)
print("identical:", a == b, "| first 120 chars:", a[:120].replace("\n", " "))

# %%
# Endpoint statistics over many seeds.
ends = np.array([endpoint_motion(sample_trajectory(make_rng(s), 2)) for s in range(2000)])
print("|dz| range", np.abs(ends[:, 0]).min().round(2), np.abs(ends[:, 0]).max().round(2))
print("|yaw| range", np.abs(ends[:, 1]).min().round(1), np.abs(ends[:, 1]).max().round(1))
print("share of negative yaw", (ends[:, 1] < 0).mean())
