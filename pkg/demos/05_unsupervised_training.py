"""The full unsupervised loop at desk scale (a few minutes on a laptop).

No manual labels anywhere: the traditional detector (median residuals,
adaptive threshold, connected components) plus SORT filtering seeds the
label store; the sparse detector trains on those pseudo labels and
periodically re-infers the train set to grow them. Scoring runs against
the synthetic ground truth on a held-out video.
"""

import time

import numpy as np

from svmod import RunConfig, SynthConfig, score, synth_video
from svmod.detector import infer_video
from svmod.evolution import run_framework


def make_video(seed, video_id):
    rng = np.random.default_rng(seed)
    speeds = []
    for _ in range(6):
        sx = rng.uniform(0.6, 1.3) * rng.choice([-1, 1])
        sy = rng.uniform(0.6, 1.3) * rng.choice([-1, 1])
        speeds.append((sx, sy))
    return synth_video(SynthConfig(
        size=(192, 192), frames=60, n_targets=6, noise_sigma=4.0,
        target_intensity_delta=(40, 80), speeds=speeds,
        n_clutter_blinks=15, seed=seed, video_id=video_id))


train_videos = [make_video(50 + i, f"train{i}")[0] for i in range(2)]
held, held_gt = make_video(99, "held")

cfg = RunConfig(depth=2, channels=(8, 16), crop=128, epochs=10,
                steps_per_epoch=10, batch_size=4, lr=3e-3,
                decay_epochs=(7, 9), update_period=4, seed=0,
                score_thresh=0.15)

start = time.time()
det, state, history = run_framework(train_videos, cfg,
                                    out_dir="demo_out/unsupervised")
print(f"trained {cfg.epochs} epochs in {time.time() - start:.0f}s")
print("loss curve:", " ".join(f"{h:.3f}" for h in history))
print("label rounds:")
for m in state.metrics:
    print(f"  round {m['round']}: {m['total']} labels "
          f"({m['evolved']} evolved)")

dets = infer_video(det, held, cfg)
report = score(dets, held_gt, d_max=cfg.d_max)
print("\nheld-out video:")
print(report.table())
