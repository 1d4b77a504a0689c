"""Temporal-median background subtraction and adaptive-threshold sampling.

The per-pixel median over a 20-frame window erases anything that keeps
moving, leaving signed residuals; thresholding the absolute residuals at
mean + k*std keeps a tiny fraction of pixels. Raising k trades recall for
sparsity, which is the whole efficiency story in one table.
"""

import warnings

import numpy as np

from svmod import SynthConfig, subtract_background, synth_video
from svmod.errors import EmptyCloudWarning
from svmod.sampling import ThresholdParams, sample_points

clip, labels = synth_video(SynthConfig(
    size=(128, 128), frames=20, n_targets=4,
    target_intensity_delta=(40, 80), noise_sigma=4.0,
    speeds=[(1.0, 0.7), (-0.9, 0.8), (1.1, -0.7), (-0.8, -1.0)],
    seed=3, video_id="demo"))

res = subtract_background(clip)
print(f"background range: [{res.background.min():.0f}, "
      f"{res.background.max():.0f}]")
print(f"residual range:   [{res.residuals.min():.1f}, "
      f"{res.residuals.max():.1f}] (signed)")

# target pixels stand far out of the residual noise floor
t0 = labels.get("demo", 10)[0]
print(f"residual at a target center: "
      f"{res.residuals[10, int(t0.cy), int(t0.cx)]:+.1f}")

print(f"\n{'k':>4} {'points':>8} {'ratio %':>9}")
with warnings.catch_warnings():
    warnings.simplefilter("ignore", EmptyCloudWarning)
    for k in (1, 3, 5, 7, 9, 11, 13, 15):
        cloud = sample_points(res, ThresholdParams(float(k)))
        print(f"{k:>4} {cloud.n:>8} {cloud.sampling_ratio * 100:>9.3f}")

print("\nk = 3 keeps a percent-level fraction of the spatio-temporal volume"
      "\nwhile retaining every target pixel; that point cloud is all the"
      "\nnetwork ever computes on.")
