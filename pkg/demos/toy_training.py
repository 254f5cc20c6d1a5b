"""
Training the toy stereo model
=============================

The toy model is a small transformer over an 8x8 latent grid of 4 frames per
view.  It learns rectified flow on synthetic scenes: a textured plane seen by
a panning stereo rig, so the right view is the left view shifted by
fx * baseline / depth pixels.  Frame 0 of both views is given clean.

This run is short (300 steps); ``stereoattn train`` runs the full 2000.
"""
from stereoattn.dit import TrainConfig, TrainState, disparity_peak, heldout_loss, heldout_scenes, sample, train
from stereoattn.kernels import make_rng

cfg = TrainConfig(steps=300)
state = TrainState.fresh(cfg)
print("held-out loss at init", round(heldout_loss(state), 3))

train(state, log=lambda r: r["step"] % 50 == 0 and print("step", r["step"], "loss", round(r["loss"], 3)))
print("held-out loss after", state.step, "steps", round(heldout_loss(state), 3))

# %%
# Generate both views from noise and read the disparity off the result.
for i, scene in enumerate(heldout_scenes(cfg, 4)):
    gen = sample(state.model, scene.video[:, 0], scene.cameras(cfg.model.policy), 20, make_rng(1, i))
    true_d = scene.gt_disparity[0, 0, 0]
    print(f"scene {i}: true disparity {true_d:.2f} px, "
          f"generated {disparity_peak(gen[0, 1:], gen[1, 1:], 4)} px")
