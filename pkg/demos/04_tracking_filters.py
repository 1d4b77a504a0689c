"""SORT tracking and the two false-alarm filters.

Constant-velocity Kalman point tracks, Hungarian association gated at
10 px, and then the pseudo-label cleanup: drop trajectories shorter than
30 points or slower than 0.55 px/frame. Blinking clutter dies by length,
parked-car-style statics die by velocity.
"""

import numpy as np

from svmod.detector import Detection, DetectionSet
from svmod.tracker import filter_tracks, track_video

rng = np.random.default_rng(5)
ds = DetectionSet("demo")

# two real movers, 60 frames each
for f in range(60):
    ds.add(Detection(f, 10.0 + 1.1 * f, 20.0 + 0.4 * f, 3, 3, 0.9))
    ds.add(Detection(f, 200.0 - 0.8 * f, 40.0 + 0.9 * f, 3, 3, 0.85))
# a static false alarm detected every frame
for f in range(60):
    ds.add(Detection(f, 120.0 + rng.normal(0, 0.1), 120.0, 3, 3, 0.7))
# blinking clutter: isolated single-frame detections
for f in range(0, 60, 7):
    ds.add(Detection(f, float(rng.uniform(0, 250)),
                     float(rng.uniform(0, 250)), 2, 2, 0.6))

tracks = track_video(ds)
print(f"raw tracks: {len(tracks)}")
for t in tracks:
    print(f"  id {t.id}: length {t.length:>3}, "
          f"mean velocity {t.mean_velocity():.2f} px/frame")

kept = filter_tracks(tracks, min_len=30, min_velocity=0.55)
print(f"\nafter length >= 30 and velocity >= 0.55 filters: {len(kept)} kept")
for t in kept:
    f0, x0, y0, *_ = t.history[0]
    f1, x1, y1, *_ = t.history[-1]
    print(f"  id {t.id}: frames {f0}-{f1}, "
          f"({x0:.0f},{y0:.0f}) -> ({x1:.0f},{y1:.0f})")
