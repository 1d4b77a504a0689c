"""Distance-based detection scoring and throughput/FLOP benchmarking.

A detection counts as a true positive when its center lies within d_max
(default 5 px, inclusive) of an unmatched ground truth; matching is greedy
in descending score order. Per-video recall/precision/F1 are averaged
arithmetically across videos.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .background import subtract_background
from .config import RunConfig, seeded_rng
from .data import BoxLabel, LabelStore
from .detector import (Detection, DetectionSet, Detector, cloud_to_tensor,
                       decode)
from .engine import flops, no_grad
from .engine.dense_ref import DenseReference
from .errors import EmptyCloudWarning
from .sampling import ThresholdParams, sample_points


def f1_score(re: float, pr: float) -> float:
    """Harmonic mean of recall and precision (percent in, percent out)."""
    return 2.0 * pr * re / (pr + re) if (pr + re) > 0 else 0.0


def match_frame(dets: list[Detection], gts: list[BoxLabel],
                d_max: float = 5.0):
    """Greedy one-to-one matching for a single frame; returns (tp, fp, fn).

    Detections are visited in descending score order; each takes the
    nearest still-unmatched ground truth within d_max (inclusive).
    """
    order = sorted(range(len(dets)),
                   key=lambda i: (-dets[i].score, dets[i].cx, dets[i].cy))
    taken = np.zeros(len(gts), dtype=bool)
    tp = 0
    for i in order:
        d = dets[i]
        best, best_dist = -1, np.inf
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            dist = np.hypot(d.cx - g.cx, d.cy - g.cy)
            if dist < best_dist:
                best, best_dist = j, dist
        if best >= 0 and best_dist <= d_max:
            taken[best] = True
            tp += 1
    fp = len(dets) - tp
    fn = len(gts) - tp
    return tp, fp, fn


@dataclass
class VideoScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def recall(self) -> float:
        denom = self.tp + self.fn
        return 100.0 * self.tp / denom if denom else 0.0

    @property
    def precision(self) -> float:
        denom = self.tp + self.fp
        return 100.0 * self.tp / denom if denom else 0.0

    @property
    def f1(self) -> float:
        return f1_score(self.recall, self.precision)


@dataclass
class EvalReport:
    per_video: dict = field(default_factory=dict)   # video_id -> VideoScore
    avg_recall: float = 0.0
    avg_precision: float = 0.0
    avg_f1: float = 0.0
    fps: float | None = None
    sampling_ratio: float | None = None
    flops_sparse: int | None = None
    flops_dense: int | None = None

    def to_dict(self) -> dict:
        out = {
            "per_video": {vid: {"recall": s.recall, "precision": s.precision,
                                "f1": s.f1, "tp": s.tp, "fp": s.fp, "fn": s.fn}
                          for vid, s in sorted(self.per_video.items())},
            "avg_recall": self.avg_recall,
            "avg_precision": self.avg_precision,
            "avg_f1": self.avg_f1,
        }
        for key in ("fps", "sampling_ratio", "flops_sparse", "flops_dense"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as f:
                f.write(text + "\n")
        return text

    def table(self) -> str:
        lines = [f"{'video':<14}{'Re%':>8}{'Pr%':>8}{'F1%':>8}"
                 f"{'TP':>8}{'FP':>8}{'FN':>8}"]
        for vid, s in sorted(self.per_video.items()):
            lines.append(f"{vid:<14}{s.recall:>8.1f}{s.precision:>8.1f}"
                         f"{s.f1:>8.1f}{s.tp:>8}{s.fp:>8}{s.fn:>8}")
        lines.append(f"{'AVERAGE':<14}{self.avg_recall:>8.1f}"
                     f"{self.avg_precision:>8.1f}{self.avg_f1:>8.1f}")
        return "\n".join(lines)


def score(detections, labels: LabelStore, d_max: float = 5.0) -> EvalReport:
    """Aggregate match_frame over all frames of one or more videos.

    `detections` is a DetectionSet or a list of them.
    """
    if isinstance(detections, DetectionSet):
        detections = [detections]
    report = EvalReport()
    for dets in detections:
        vid = dets.video_id
        vs = report.per_video.setdefault(vid, VideoScore())
        frames = sorted(set(dets.frames()) | set(labels.frames(vid)))
        for frame in frames:
            tp, fp, fn = match_frame(dets.at(frame), labels.get(vid, frame),
                                     d_max)
            vs.tp += tp
            vs.fp += fp
            vs.fn += fn
    if report.per_video:
        scores = list(report.per_video.values())
        report.avg_recall = float(np.mean([s.recall for s in scores]))
        report.avg_precision = float(np.mean([s.precision for s in scores]))
        report.avg_f1 = float(np.mean([s.f1 for s in scores]))
    return report


# ---------------------------------------------------------------------------
# Benchmarking

@dataclass
class BenchReport:
    fps: float
    frames: int
    seconds_sparse: float
    seconds_dense: float | None
    speedup: float | None
    macs_sparse: int
    macs_dense: int
    flop_ratio: float
    sampling_ratio: float
    n_points: int
    runs: int

    def to_dict(self):
        return dict(self.__dict__)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as f:
                f.write(text + "\n")
        return text


def _sparse_pipeline(det: Detector, clip, cfg: RunConfig):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyCloudWarning)
        cloud = sample_points(subtract_background(clip),
                              ThresholdParams(cfg.k))
    if cloud.is_empty():
        return cloud, DetectionSet(clip.video_id)
    out = det.forward(cloud_to_tensor(cloud, det.dtype), train=False)
    return cloud, decode(out, cfg.score_thresh, cfg.max_per_frame,
                         frame_offset=clip.start_frame,
                         video_id=clip.video_id)


def bench(cfg: RunConfig, clip, detector: Detector | None = None,
          runs: int = 5, warmup: int = 1, dense_wallclock: bool = True) -> BenchReport:
    """Wall-clock FPS of the full sparse pipeline (median of >= runs) plus
    a FLOP and latency comparison against the dense reference network."""
    runs = max(5, runs)
    det = detector or Detector(cfg.net_channels(),
                               rng=seeded_rng(cfg.seed, "init"))
    t_frames = clip.frames.shape[0]

    with no_grad():
        for _ in range(warmup):
            _sparse_pipeline(det, clip, cfg)
        times = []
        cloud = None
        for _ in range(runs):
            start = time.perf_counter()
            cloud, _ = _sparse_pipeline(det, clip, cfg)
            times.append(time.perf_counter() - start)
        seconds_sparse = float(np.median(times))

        flops.reset()
        _sparse_pipeline(det, clip, cfg)
        macs_sparse, _ = flops.totals()

        ref = DenseReference(det)
        t, h, w = clip.frames.shape
        macs_dense = ref.conv_macs(t, h, w)
        seconds_dense = None
        if dense_wallclock:
            res = subtract_background(clip)
            start = time.perf_counter()
            ref.forward(res.residuals)
            seconds_dense = time.perf_counter() - start

    return BenchReport(
        fps=t_frames / seconds_sparse,
        frames=t_frames,
        seconds_sparse=seconds_sparse,
        seconds_dense=seconds_dense,
        speedup=(seconds_dense / seconds_sparse) if seconds_dense else None,
        macs_sparse=int(macs_sparse),
        macs_dense=int(macs_dense),
        flop_ratio=macs_sparse / macs_dense if macs_dense else 0.0,
        sampling_ratio=cloud.sampling_ratio if cloud is not None else 0.0,
        n_points=cloud.n if cloud is not None else 0,
        runs=runs)


# ---------------------------------------------------------------------------
# Overlays

def dump_overlays(dets: DetectionSet, labels: LabelStore, clip, out_dir,
                  d_max: float = 5.0) -> None:
    """PNG frames with TP boxes in yellow, FP in red, FN in green."""
    from pathlib import Path

    from PIL import Image, ImageDraw

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vid = dets.video_id
    for t in range(clip.frames.shape[0]):
        frame_no = clip.start_frame + t
        frame_dets = dets.at(frame_no)
        gts = labels.get(vid, frame_no)
        img = Image.fromarray(
            np.clip(np.rint(clip.frames[t]), 0, 255).astype(np.uint8)
        ).convert("RGB")
        draw = ImageDraw.Draw(img)

        order = sorted(range(len(frame_dets)),
                       key=lambda i: -frame_dets[i].score)
        taken = [False] * len(gts)
        matched_det = [False] * len(frame_dets)
        for i in order:
            d = frame_dets[i]
            best, best_dist = -1, np.inf
            for j, g in enumerate(gts):
                if taken[j]:
                    continue
                dist = np.hypot(d.cx - g.cx, d.cy - g.cy)
                if dist < best_dist:
                    best, best_dist = j, dist
            if best >= 0 and best_dist <= d_max:
                taken[best] = True
                matched_det[i] = True

        def box(cx, cy, w, h):
            return [cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2]

        for i, d in enumerate(frame_dets):
            color = (255, 255, 0) if matched_det[i] else (255, 0, 0)
            draw.rectangle(box(d.cx, d.cy, max(d.w, 2), max(d.h, 2)),
                           outline=color)
        for j, g in enumerate(gts):
            if not taken[j]:
                draw.rectangle(box(g.cx, g.cy, max(g.w, 2), max(g.h, 2)),
                               outline=(0, 255, 0))
        img.save(out_dir / f"overlay{frame_no + 1:06d}.png")
