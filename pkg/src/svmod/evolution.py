"""Unsupervised label self-evolution.

Round 0: a traditional detector (temporal-median residuals, adaptive
threshold, connected components) generates candidate boxes; SORT plus
trajectory-length/velocity filters turn them into initial pseudo labels.
During training the current network periodically re-infers the train set;
filtered new tracks are merged into the label store while every initial
label is retained, so the store only grows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .background import subtract_background
from .config import RunConfig
from .data import BoxLabel, FrameClip, LabelStore, save_labels
from .detector import (Detection, DetectionSet, Detector, Trainer,
                       infer_video)
from .sampling import adaptive_threshold, connected_components
from .tracker import TrackerConfig, filter_tracks, track_video


def traditional_detect(clip: FrameClip, k: float = 3.0) -> LabelStore:
    """Median-residual + threshold + connected components, one box per blob.

    Boxes carry provenance 'initial' and are not yet trajectory-filtered.
    """
    res = subtract_background(clip)
    store = LabelStore()
    for t in range(res.residuals.shape[0]):
        _, mask = adaptive_threshold(res.residuals[t], k)
        for box in connected_components(mask):
            store.add(clip.video_id, BoxLabel(
                frame=clip.start_frame + t, cx=box.cx, cy=box.cy,
                w=box.w, h=box.h, provenance="initial"))
    return store


def _store_to_detections(store: LabelStore, video_id: str) -> DetectionSet:
    dets = DetectionSet(video_id)
    for frame in store.frames(video_id):
        for b in store.get(video_id, frame):
            dets.add(Detection(frame=frame, cx=b.cx, cy=b.cy, w=b.w, h=b.h,
                               score=1.0))
    return dets


def _tracks_to_labels(tracks, video_id: str, provenance: str,
                      round_no: int = 0) -> LabelStore:
    store = LabelStore()
    for track in tracks:
        for frame, cx, cy, w, h in track.history:
            try:
                store.add(video_id, BoxLabel(frame=frame, cx=cx, cy=cy, w=w,
                                             h=h, track_id=track.id,
                                             provenance=provenance,
                                             round=round_no))
            except ValueError:
                pass   # two tracks crossing the exact same center: keep one
    return store


def make_initial_labels(video: FrameClip, cfg: RunConfig) -> LabelStore:
    """Traditional detection, SORT, then length/velocity filtering."""
    candidates = LabelStore()
    n = video.frames.shape[0]
    t_clip = min(cfg.frames_per_clip, n)
    starts = list(range(0, n - t_clip + 1, t_clip))
    if starts and starts[-1] + t_clip < n:
        starts.append(n - t_clip)
    seen_until = 0
    for start in starts:
        chunk = traditional_detect(video.window(start, t_clip), cfg.k)
        for vid, b in chunk.iter_labels():
            if b.frame >= seen_until:
                candidates.add(vid, b)
        seen_until = max(seen_until, start + t_clip)
    dets = _store_to_detections(candidates, video.video_id)
    tracks = track_video(dets, TrackerConfig.from_run(cfg))
    kept = filter_tracks(tracks, cfg.min_track_len, cfg.min_velocity)
    return _tracks_to_labels(kept, video.video_id, "initial")


@dataclass
class EvolutionState:
    round: int
    initial_labels: LabelStore      # frozen after round 0
    current_labels: LabelStore
    checkpoint_path: str | None = None
    metrics: list = field(default_factory=list)

    def label_counts(self) -> dict:
        return {"total": len(self.current_labels),
                "initial": self.current_labels.count("initial"),
                "evolved": self.current_labels.count("evolved")}


def merge_labels(store: LabelStore, additions: LabelStore,
                 merge_radius: float, round_no: int) -> int:
    """Add labels whose center is > merge_radius from every same-frame label.

    Returns the number of labels added; existing labels are never removed.
    """
    added = 0
    for vid, b in additions.iter_labels():
        existing = store.get(vid, b.frame)
        too_close = any(np.hypot(e.cx - b.cx, e.cy - b.cy) <= merge_radius
                        for e in existing)
        if too_close:
            continue
        store.add(vid, BoxLabel(frame=b.frame, cx=b.cx, cy=b.cy, w=b.w,
                                h=b.h, track_id=b.track_id,
                                provenance="evolved", round=round_no))
        added += 1
    return added


def evolve_labels(state: EvolutionState, detector: Detector,
                  videos: list[FrameClip], cfg: RunConfig) -> EvolutionState:
    """One evolution round: infer, track, filter, merge. Round increments
    even when nothing qualifies.

    Inference runs at the permissive evolve_score_thresh; the trajectory
    filters, not the score cut, carry the false-alarm burden here.
    """
    import dataclasses

    infer_cfg = dataclasses.replace(cfg, score_thresh=cfg.evolve_score_thresh)
    new_round = state.round + 1
    added = 0
    for video in videos:
        dets = infer_video(detector, video, infer_cfg)
        tracks = track_video(dets, TrackerConfig.from_run(cfg))
        kept = filter_tracks(tracks, cfg.min_track_len, cfg.min_velocity)
        labels = _tracks_to_labels(kept, video.video_id, "evolved", new_round)
        added += merge_labels(state.current_labels, labels,
                              cfg.merge_radius, new_round)
    state.round = new_round
    state.current_labels.round = new_round
    state.metrics.append({"round": new_round, "added": added,
                          **state.label_counts()})
    return state


def run_framework(videos: list[FrameClip], cfg: RunConfig,
                  initial_labels: LabelStore | None = None,
                  out_dir=None):
    """Full unsupervised loop: initial labels, train, evolve periodically.

    Returns (detector, EvolutionState, loss history). Per-round label
    snapshots and a reproducibility manifest are written when out_dir is
    given. With update_period > epochs this degenerates to single-round
    training on the initial labels.
    """
    out_path = Path(out_dir) if out_dir else None
    if out_path:
        out_path.mkdir(parents=True, exist_ok=True)

    if initial_labels is None:
        initial_labels = LabelStore()
        for video in videos:
            part = make_initial_labels(video, cfg)
            for vid, b in part.iter_labels():
                initial_labels.add(vid, b)

    state = EvolutionState(round=0, initial_labels=initial_labels.copy(),
                           current_labels=initial_labels.copy())
    state.metrics.append({"round": 0, "added": len(initial_labels),
                          **state.label_counts()})
    if out_path:
        save_labels(state.current_labels, out_path / "labels_round0.csv")

    trainer = Trainer(videos, state.current_labels, cfg)

    def maybe_evolve(tr: Trainer):
        if tr.epoch % cfg.update_period != 0 or tr.epoch >= cfg.epochs:
            return
        evolve_labels(state, tr.det, videos, cfg)
        tr.labels = state.current_labels
        if out_path:
            save_labels(state.current_labels,
                        out_path / f"labels_round{state.round}.csv")

    for _ in range(cfg.epochs):
        trainer.run_epoch()
        if out_path:
            trainer.det.save(out_path / f"ckpt_epoch{trainer.epoch:03d}.svck",
                             {"epoch": trainer.epoch})
        maybe_evolve(trainer)

    if out_path:
        final = out_path / "ckpt_final.svck"
        trainer.det.save(final, {"epoch": trainer.epoch,
                                 "round": state.round})
        state.checkpoint_path = str(final)
        save_labels(state.current_labels,
                    out_path / f"labels_round{state.round}.csv")
        manifest = {"version": __version__, "seed": cfg.seed,
                    "config": cfg.to_dict(),
                    "rounds": state.metrics}
        with open(out_path / "run_manifest.json", "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
    return trainer.det, state, trainer.history
