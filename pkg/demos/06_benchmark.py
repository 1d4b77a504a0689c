"""Sparse-versus-dense cost on one clip (512x512 here to stay quick).

The sparse pipeline's measured multiply-accumulates scale with rulebook
pairs (roughly occupancy x kernel-neighbor hit rate), so at percent-level
occupancy the network does a small fraction of the dense reference's
arithmetic; the wall-clock gap follows. Pass --full for the 1024x1024x20
configuration used by the acceptance suite (several minutes).
"""

import sys

from svmod import RunConfig, SynthConfig, synth_video
from svmod.evaluation import bench

size = 1024 if "--full" in sys.argv else 512
scfg = SynthConfig(size=(size, size), frames=20, n_targets=60,
                   noise_sigma=4.0, target_intensity_delta=(30, 70),
                   n_clutter_blinks=400, seed=0, video_id="bench",
                   jitter_px=0.4, speckle_fraction=0.014)
clip, _ = synth_video(scfg)
cfg = RunConfig(depth=2, channels=(8, 16), seed=0)

report = bench(cfg, clip, runs=5)
print(f"clip: {size}x{size}x20, occupancy {report.sampling_ratio:.2%} "
      f"({report.n_points} points)")
print(f"sparse pipeline: {report.seconds_sparse:.2f}s/clip "
      f"({report.fps:.1f} frames/s), {report.macs_sparse / 1e9:.2f} GMAC")
print(f"dense reference: {report.seconds_dense:.2f}s/clip, "
      f"{report.macs_dense / 1e9:.2f} GMAC")
print(f"FLOP ratio {report.flop_ratio:.3%}, wall-clock speedup "
      f"{report.speedup:.1f}x")
