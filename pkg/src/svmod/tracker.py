"""SORT-style tracking over per-frame detections.

Targets here are a few pixels wide, so IoU association is unstable; tracks
keep a constant-velocity point state (x, y, vx, vy) and detections are
associated by center distance with a Hungarian assignment. Box size rides
along as the last observed value. Trajectory-length and mean-velocity
filters clean the resulting track sets for pseudo-label use.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import RunConfig
from .detector import DetectionSet

F_MAT = np.array([[1.0, 0, 1, 0],
                  [0, 1, 0, 1],
                  [0, 0, 1, 0],
                  [0, 0, 0, 1]])
H_MAT = np.array([[1.0, 0, 0, 0],
                  [0, 1, 0, 0]])


@dataclass
class TrackerConfig:
    gate: float = 10.0
    max_age: int = 3
    process_noise: float = 0.01       # q
    measurement_noise: float = 1.0    # r
    init_velocity_var: float = 100.0

    @classmethod
    def from_run(cls, cfg: RunConfig) -> "TrackerConfig":
        return cls(cfg.gate, cfg.max_age, cfg.process_noise,
                   cfg.measurement_noise)


class KalmanTrack:
    """Constant-velocity point track with per-frame history."""

    def __init__(self, track_id: int, frame: int, cx, cy, w, h,
                 cfg: TrackerConfig):
        self.id = track_id
        self.cfg = cfg
        self.state = np.array([cx, cy, 0.0, 0.0])
        r = cfg.measurement_noise
        self.cov = np.diag([r, r, cfg.init_velocity_var,
                            cfg.init_velocity_var])
        self.hits = 1
        self.misses = 0
        self.history: list[tuple] = [(int(frame), float(cx), float(cy),
                                      float(w), float(h))]

    def predict(self):
        """Advance one frame; returns the predicted (x, y)."""
        q = self.cfg.process_noise
        self.state = F_MAT @ self.state
        self.cov = F_MAT @ self.cov @ F_MAT.T + q * np.eye(4)
        return float(self.state[0]), float(self.state[1])

    def update(self, frame: int, cx, cy, w, h):
        z = np.array([cx, cy])
        r = self.cfg.measurement_noise
        s = H_MAT @ self.cov @ H_MAT.T + r * np.eye(2)
        gain = self.cov @ H_MAT.T @ np.linalg.inv(s)
        self.state = self.state + gain @ (z - H_MAT @ self.state)
        self.cov = (np.eye(4) - gain @ H_MAT) @ self.cov
        self.hits += 1
        self.misses = 0
        if self.history and self.history[-1][0] == int(frame):
            raise ValueError(f"frame {frame} already present in track {self.id}")
        self.history.append((int(frame), float(cx), float(cy),
                             float(w), float(h)))

    @property
    def length(self) -> int:
        return len(self.history)

    def mean_velocity(self) -> float:
        """Mean frame-to-frame centroid displacement in px/frame."""
        if len(self.history) < 2:
            return 0.0
        steps = []
        for (f0, x0, y0, *_), (f1, x1, y1, *_) in zip(self.history,
                                                      self.history[1:]):
            gap = max(1, f1 - f0)
            steps.append(np.hypot(x1 - x0, y1 - y0) / gap)
        return float(np.mean(steps))


def kalman_predict(track: KalmanTrack):
    return track.predict()


@dataclass
class TrackSet:
    video_id: str = "video"
    tracks: list = field(default_factory=list)

    def __len__(self):
        return len(self.tracks)

    def __iter__(self):
        return iter(self.tracks)


def associate(track_positions, det_positions, gate: float = 10.0):
    """Globally optimal one-to-one matching by Euclidean center distance.

    Returns (matches, unmatched_track_idx, unmatched_det_idx); pairs at
    distance > gate stay unmatched.
    """
    track_positions = np.asarray(track_positions, dtype=float).reshape(-1, 2)
    det_positions = np.asarray(det_positions, dtype=float).reshape(-1, 2)
    n_t, n_d = len(track_positions), len(det_positions)
    if n_t == 0 or n_d == 0:
        return [], list(range(n_t)), list(range(n_d))
    cost = np.linalg.norm(track_positions[:, None] - det_positions[None],
                          axis=2)
    # Cap out-of-gate pairs at a constant larger than any full matching so
    # the assignment maximizes gated matches, then minimizes their distance.
    big = gate * (min(n_t, n_d) + 1) + 1.0
    rows, cols = linear_sum_assignment(np.where(cost <= gate, cost, big))
    matches = []
    matched_t, matched_d = set(), set()
    for r, c in zip(rows, cols):
        if cost[r, c] <= gate:
            matches.append((int(r), int(c)))
            matched_t.add(int(r))
            matched_d.add(int(c))
    unmatched_t = [i for i in range(n_t) if i not in matched_t]
    unmatched_d = [i for i in range(n_d) if i not in matched_d]
    return matches, unmatched_t, unmatched_d


def track_video(dets: DetectionSet,
                cfg: TrackerConfig | RunConfig | None = None) -> TrackSet:
    """Run the SORT lifecycle over a video's detections, frames in order."""
    if cfg is None:
        cfg = TrackerConfig()
    elif isinstance(cfg, RunConfig):
        cfg = TrackerConfig.from_run(cfg)

    frames = dets.frames()
    out = TrackSet(video_id=dets.video_id)
    if not frames:
        return out
    active: list[KalmanTrack] = []
    next_id = 0
    for frame in range(frames[0], frames[-1] + 1):
        frame_dets = dets.at(frame)
        predicted = np.array([t.predict() for t in active]).reshape(-1, 2)
        positions = np.array([(d.cx, d.cy) for d in frame_dets]).reshape(-1, 2)
        matches, unmatched_t, unmatched_d = associate(predicted, positions,
                                                      cfg.gate)
        for ti, di in matches:
            d = frame_dets[di]
            active[ti].update(frame, d.cx, d.cy, d.w, d.h)
        finished_idx = []
        for ti in unmatched_t:
            active[ti].misses += 1
            if active[ti].misses >= cfg.max_age:
                finished_idx.append(ti)
        for ti in sorted(finished_idx, reverse=True):
            out.tracks.append(active.pop(ti))
        for di in unmatched_d:
            d = frame_dets[di]
            active.append(KalmanTrack(next_id, frame, d.cx, d.cy, d.w, d.h,
                                      cfg))
            next_id += 1
    out.tracks.extend(active)
    out.tracks.sort(key=lambda t: t.id)
    return out


def filter_tracks(tracks: TrackSet, min_len: int = 30,
                  min_velocity: float = 0.55) -> TrackSet:
    """Keep tracks with length >= min_len AND mean velocity >= min_velocity.

    Both thresholds are inclusive: a 30-point track at 0.55 px/frame stays.
    """
    kept = [t for t in tracks
            if t.length >= min_len and t.mean_velocity() >= min_velocity]
    return TrackSet(video_id=tracks.video_id, tracks=kept)


def dump_tracks_csv(tracks: TrackSet, path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["video_id", "track_id", "frame", "cx", "cy", "w", "h"])
        for t in tracks:
            for frame, cx, cy, w, h in t.history:
                writer.writerow([tracks.video_id, t.id, frame,
                                 repr(cx), repr(cy), repr(w), repr(h)])
