"""Sparse U-Net backbone with an anchor-free center/size/offset head.

One forward pass over a T-frame point cloud emits detections for all T
frames at once. The encoder downsamples spatially only, stride (1, 2, 2),
so full temporal resolution survives to the head; transposed convolutions
restore exactly the recorded pre-downsampling coordinate sets, hence the
output coordinates equal the input coordinates.
"""

from __future__ import annotations

import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .background import subtract_background
from .config import RunConfig, seeded_rng
from .data import BoxLabel, FrameClip, LabelStore
from .engine import (Adam, BatchNorm, SparseConv, SparseTensor, Tensor,
                     as_tensor, build_rulebook, concat_channels,
                     load_checkpoint, no_grad, save_checkpoint)
from .engine.autodiff import gather_rows
from .engine.layers import relu as relu_sparse
from .errors import Diverged, EmptyCloudWarning, InvalidConfig
from .sampling import PointCloud, ThresholdParams, sample_points

TrainConfig = RunConfig   # the flat run config doubles as the train config

CENTER_PRIOR_BIAS = -2.19   # sigmoid(-2.19) ~ 0.1, stabilizes early focal loss


@dataclass
class LossWeights:
    lambda_size: float = 0.1
    lambda_offset: float = 1.0

    def __post_init__(self):
        if self.lambda_size < 0 or self.lambda_offset < 0:
            raise ValueError("loss weights must be >= 0")


@dataclass
class HeadOutput:
    """Per-site center logits plus size/offset regressions, shared coords."""

    center: SparseTensor   # C = 1, pre-sigmoid
    size: SparseTensor     # C = 2, (w, h) in pixels
    offset: SparseTensor   # C = 2, (dx, dy) from the site to the true center

    @property
    def coords(self):
        return self.center.coords

    @property
    def n(self):
        return self.center.n


@dataclass
class TrainTargets:
    heat: np.ndarray          # (N,) in [0, 1]; exactly 1 at positive sites
    size: np.ndarray          # (N, 2), meaningful at positives
    offset: np.ndarray        # (N, 2), meaningful at positives
    pos_mask: np.ndarray      # (N,) bool
    misses: list = field(default_factory=list)   # (frame, BoxLabel) coverage misses

    @property
    def n_pos(self) -> int:
        return int(self.pos_mask.sum())


@dataclass
class Detection:
    frame: int
    cx: float
    cy: float
    w: float
    h: float
    score: float


class DetectionSet:
    """Per-frame decoded objects for one video."""

    def __init__(self, video_id: str = "video"):
        self.video_id = video_id
        self._frames: dict[int, list[Detection]] = {}

    def add(self, det: Detection):
        self._frames.setdefault(int(det.frame), []).append(det)

    def extend(self, dets):
        for d in dets:
            self.add(d)

    def frames(self) -> list[int]:
        return sorted(self._frames)

    def at(self, frame: int) -> list[Detection]:
        return list(self._frames.get(int(frame), ()))

    def all(self) -> list[Detection]:
        return [d for f in self.frames() for d in self._frames[f]]

    def __len__(self):
        return sum(len(v) for v in self._frames.values())


DETECTION_CSV_HEADER = ["video_id", "frame", "cx", "cy", "w", "h", "score"]


def save_detections(det_sets, path) -> None:
    """CSV dump `video_id,frame,cx,cy,w,h,score` for one or more videos."""
    import csv

    if isinstance(det_sets, DetectionSet):
        det_sets = [det_sets]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(DETECTION_CSV_HEADER)
        for ds in det_sets:
            for d in ds.all():
                writer.writerow([ds.video_id, d.frame, repr(d.cx), repr(d.cy),
                                 repr(d.w), repr(d.h), repr(d.score)])


def load_detections(path) -> list[DetectionSet]:
    """Inverse of save_detections; returns one DetectionSet per video."""
    import csv

    from .errors import ParseError

    sets: dict[str, DetectionSet] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != DETECTION_CSV_HEADER:
            raise ParseError(f"line 1: bad header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ds = sets.setdefault(row[0], DetectionSet(row[0]))
                ds.add(Detection(frame=int(row[1]), cx=float(row[2]),
                                 cy=float(row[3]), w=float(row[4]),
                                 h=float(row[5]), score=float(row[6])))
            except (ValueError, IndexError) as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc
    return [sets[k] for k in sorted(sets)]


# ---------------------------------------------------------------------------
# Network

class Detector:
    """Sparse U-Net (depth 2-4) + three parallel sparse head branches."""

    def __init__(self, channels=(16, 32, 64), in_channels=1, rng=None,
                 dtype=np.float32):
        channels = tuple(int(c) for c in channels)
        if len(channels) not in (2, 3, 4):
            raise InvalidConfig(f"depth must be 2, 3 or 4, got {len(channels)}")
        self.channels = channels
        self.in_channels = in_channels
        self.depth = len(channels)
        self.dtype = dtype
        rng = rng or np.random.default_rng(0)

        def conv(cin, cout, name, kernel=(3, 3, 3), stride=(1, 1, 1),
                 mode="submanifold", bias=False):
            return SparseConv(cin, cout, kernel, stride, mode, bias=bias,
                              rng=rng, dtype=dtype, name=name)

        c0 = channels[0]
        self.stem = conv(in_channels, c0, "stem")
        self.stem_bn = BatchNorm(c0, dtype=dtype, name="stem_bn")
        self.downs, self.down_bns, self.mids, self.mid_bns = [], [], [], []
        for lvl in range(1, self.depth):
            cp, cc = channels[lvl - 1], channels[lvl]
            self.downs.append(conv(cp, cc, f"down{lvl}", stride=(1, 2, 2),
                                   mode="strided"))
            self.down_bns.append(BatchNorm(cc, dtype=dtype, name=f"down{lvl}_bn"))
            self.mids.append(conv(cc, cc, f"mid{lvl}"))
            self.mid_bns.append(BatchNorm(cc, dtype=dtype, name=f"mid{lvl}_bn"))
        self.ups, self.up_bns, self.fuses, self.fuse_bns = [], [], [], []
        for lvl in range(self.depth - 1, 0, -1):
            cp, cc = channels[lvl - 1], channels[lvl]
            self.ups.append(conv(cc, cp, f"up{lvl}", stride=(1, 2, 2),
                                 mode="transposed"))
            self.up_bns.append(BatchNorm(cp, dtype=dtype, name=f"up{lvl}_bn"))
            self.fuses.append(conv(2 * cp, cp, f"fuse{lvl}"))
            self.fuse_bns.append(BatchNorm(cp, dtype=dtype, name=f"fuse{lvl}_bn"))

        # three parallel branches: 3x3x3 (+relu) then 1x1x1 projection
        self.head_layers = []
        for branch, c_out in (("ctr", 1), ("size", 2), ("off", 2)):
            conv3 = SparseConv(c0, c0, (3, 3, 3), bias=True, rng=rng,
                               dtype=dtype, name=f"head_{branch}3")
            conv1 = SparseConv(c0, c_out, (1, 1, 1), bias=True, rng=rng,
                               dtype=dtype, name=f"head_{branch}1")
            if branch == "ctr":
                conv1.b.data = np.full(c_out, CENTER_PRIOR_BIAS, dtype=dtype)
            self.head_layers.append((conv3, conv1))

    # -- plumbing -----------------------------------------------------------

    def _modules(self):
        mods = [self.stem, self.stem_bn]
        for group in (self.downs, self.down_bns, self.mids, self.mid_bns,
                      self.ups, self.up_bns, self.fuses, self.fuse_bns):
            mods.extend(group)
        for conv3, conv1 in self.head_layers:
            mods.extend([conv3, conv1])
        return mods

    def parameters(self) -> OrderedDict:
        out = OrderedDict()
        for m in self._modules():
            out.update(m.params())
        return out

    def buffers(self) -> OrderedDict:
        out = OrderedDict()
        for m in self._modules():
            out.update(m.buffers())
        return out

    def state_dict(self) -> OrderedDict:
        out = OrderedDict((k, v.data) for k, v in self.parameters().items())
        out.update(self.buffers())
        return out

    def load_state_dict(self, arrays):
        params = self.parameters()
        for name, tensor in params.items():
            tensor.assign(np.asarray(arrays[name], dtype=tensor.data.dtype))
        for m in self._modules():
            if isinstance(m, BatchNorm):
                m.load_buffers(arrays[f"{m.name}.running_mean"],
                               arrays[f"{m.name}.running_var"])

    def save(self, path, extra_meta=None):
        meta = {"channels": list(self.channels),
                "in_channels": self.in_channels,
                "dtype": np.dtype(self.dtype).str}
        meta.update(extra_meta or {})
        save_checkpoint(path, self.state_dict(), meta)

    @classmethod
    def load(cls, path) -> "Detector":
        arrays, meta = load_checkpoint(path)
        det = cls(channels=tuple(meta["channels"]),
                  in_channels=int(meta.get("in_channels", 1)),
                  dtype=np.dtype(meta.get("dtype", "<f4")).type)
        det.load_state_dict(arrays)
        return det

    # -- forward ------------------------------------------------------------

    def unet_forward(self, st: SparseTensor, train: bool = False,
                     _cache: dict | None = None) -> SparseTensor:
        """Per-site embedding; output coordinate set equals the input set."""
        if st.n == 0:
            return st.with_feats(np.zeros((0, self.channels[0]),
                                          dtype=self.dtype))
        cache = _cache if _cache is not None else {}
        rb0, _ = build_rulebook(st, (3, 3, 3))
        cache["rb0"] = rb0
        x = relu_sparse(self.stem_bn(self.stem(st, rb0), train))
        skips = [x]
        level_rbs = [rb0]
        records = []
        for lvl in range(1, self.depth):
            rb_s, _ = build_rulebook(x, (3, 3, 3), (1, 2, 2), "strided")
            records.append(rb_s)
            x = relu_sparse(self.down_bns[lvl - 1](
                self.downs[lvl - 1](x, rb_s), train))
            rb_l, _ = build_rulebook(x, (3, 3, 3))
            level_rbs.append(rb_l)
            x = relu_sparse(self.mid_bns[lvl - 1](
                self.mids[lvl - 1](x, rb_l), train))
            if lvl < self.depth - 1:
                skips.append(x)
        for i, lvl in enumerate(range(self.depth - 1, 0, -1)):
            rb_t, _ = build_rulebook(x, (3, 3, 3), (1, 2, 2), "transposed",
                                     record=records[lvl - 1])
            x = relu_sparse(self.up_bns[i](self.ups[i](x, rb_t), train))
            x = concat_channels(x, skips[lvl - 1])
            x = relu_sparse(self.fuse_bns[i](
                self.fuses[i](x, level_rbs[lvl - 1]), train))
        return x

    def head_forward(self, emb: SparseTensor, train: bool = False,
                     _cache: dict | None = None) -> HeadOutput:
        """Three parallel branches over the embedding's coordinates."""
        if emb.n == 0:
            empty = [emb.with_feats(np.zeros((0, c), dtype=self.dtype))
                     for c in (1, 2, 2)]
            return HeadOutput(*empty)
        cache = _cache or {}
        rb0 = cache.get("rb0")
        if rb0 is None:
            rb0, _ = build_rulebook(emb, (3, 3, 3))
        rb1, _ = build_rulebook(emb, (1, 1, 1))
        outs = []
        for conv3, conv1 in self.head_layers:
            h = relu_sparse(conv3(emb, rb0))
            outs.append(conv1(h, rb1))
        return HeadOutput(*outs)

    def forward(self, st: SparseTensor, train: bool = False) -> HeadOutput:
        cache: dict = {}
        emb = self.unet_forward(st, train, _cache=cache)
        return self.head_forward(emb, train, _cache=cache)

    def __call__(self, st, train=False):
        return self.forward(st, train)


def cloud_to_tensor(cloud: PointCloud, dtype=np.float32) -> SparseTensor:
    return SparseTensor(cloud.coords, Tensor(cloud.feats.astype(dtype)),
                        cloud.shape, _checked=True)


# ---------------------------------------------------------------------------
# Targets

def gaussian_radius(height: float, width: float, min_overlap: float = 0.7) -> float:
    """Radius keeping >= min_overlap IoU for a box of the given size
    (the usual three-case quadratic bound)."""
    a1 = 1.0
    b1 = height + width
    c1 = width * height * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 + math.sqrt(max(b1 ** 2 - 4 * a1 * c1, 0.0))) / 2.0

    a2 = 4.0
    b2 = 2.0 * (height + width)
    c2 = (1 - min_overlap) * width * height
    r2 = (b2 + math.sqrt(max(b2 ** 2 - 4 * a2 * c2, 0.0))) / 2.0

    a3 = 4.0 * min_overlap
    b3 = -2.0 * min_overlap * (height + width)
    c3 = (min_overlap - 1) * width * height
    r3 = (b3 + math.sqrt(max(b3 ** 2 - 4 * a3 * c3, 0.0))) / 2.0
    return min(r1, r2, r3)


def _frame_slices(coords: np.ndarray, t_total: int):
    """Row ranges per frame; coords are sorted by t first."""
    bounds = np.searchsorted(coords[:, 0], np.arange(t_total + 1))
    return [(int(bounds[t]), int(bounds[t + 1])) for t in range(t_total)]


def render_targets(labels, cloud: PointCloud, video_id: str | None = None,
                   frame_offset: int = 0,
                   assign_radius_min: float = 3.0) -> TrainTargets:
    """Assign each box to its nearest free active site and splat heatmaps.

    `labels` is either a LabelStore (video_id required; clip frame t maps to
    store frame frame_offset + t) or a list of per-frame box lists. Boxes
    with no free site within max(assign_radius_min, max(w, h)) px become
    coverage misses.
    """
    t_total = cloud.shape[0]
    if isinstance(labels, LabelStore):
        per_frame = [labels.get(video_id, frame_offset + t)
                     for t in range(t_total)]
    else:
        per_frame = labels

    n = cloud.n
    heat = np.zeros(n)
    size_t = np.zeros((n, 2))
    off_t = np.zeros((n, 2))
    pos = np.zeros(n, dtype=bool)
    misses = []

    slices = _frame_slices(cloud.coords, t_total)
    for t in range(t_total):
        boxes = per_frame[t]
        if not boxes:
            continue
        lo, hi = slices[t]
        xs = cloud.coords[lo:hi, 2].astype(float)
        ys = cloud.coords[lo:hi, 1].astype(float)
        for box in boxes:
            d2 = (xs - box.cx) ** 2 + (ys - box.cy) ** 2
            # gaussian splat around the true center (max-combined)
            radius = max(1.0, gaussian_radius(box.h, box.w))
            sigma = max(1.0, radius / 3.0)
            if d2.size:
                gauss = np.exp(-d2 / (2.0 * sigma * sigma))
                seg = heat[lo:hi]
                np.maximum(seg, gauss, out=seg)
            # nearest free site within the assignment radius
            assign_r = max(assign_radius_min, box.w, box.h)
            assigned = None
            if d2.size:
                order = np.argsort(d2, kind="stable")
                for ridx in order:
                    if d2[ridx] > assign_r * assign_r:
                        break
                    row = lo + int(ridx)
                    if not pos[row]:
                        assigned = row
                        break
            if assigned is None:
                misses.append((t, box))
                continue
            pos[assigned] = True
            heat[assigned] = 1.0
            size_t[assigned] = (box.w, box.h)
            off_t[assigned] = (box.cx - xs[assigned - lo],
                               box.cy - ys[assigned - lo])
    return TrainTargets(heat, size_t, off_t, pos, misses)


# ---------------------------------------------------------------------------
# Loss

def detection_loss(out: HeadOutput, tgt: TrainTargets,
                   weights: LossWeights | None = None):
    """L = L_ctr + lambda1 * L_size + lambda2 * L_off (graph-connected).

    L_ctr is the penalty-reduced focal loss (alpha=2, beta=4) over active
    sites, normalized by max(1, positives); size/offset terms are the mean
    absolute error over positive-site entries. Returns (loss, parts).
    """
    weights = weights or LossWeights()
    x = as_tensor(out.center.feats)
    n = out.n
    n_pos = tgt.n_pos
    norm = 1.0 / max(1, n_pos)

    pos_col = tgt.pos_mask.astype(x.data.dtype).reshape(n, 1)
    heat_col = tgt.heat.astype(x.data.dtype).reshape(n, 1)
    neg_w = ((1.0 - heat_col) ** 4) * (1.0 - pos_col)

    p = x.sigmoid()
    pos_term = ((1.0 - p) ** 2.0 * x.logsigmoid() * pos_col).sum()
    neg_term = (p ** 2.0 * (-x).logsigmoid() * neg_w).sum()
    l_ctr = (pos_term + neg_term) * (-norm)

    if n_pos > 0:
        rows = np.nonzero(tgt.pos_mask)[0]
        size_pred = gather_rows(as_tensor(out.size.feats), rows)
        off_pred = gather_rows(as_tensor(out.offset.feats), rows)
        l_size = (size_pred - tgt.size[rows].astype(size_pred.dtype)).abs() \
            .sum() * (1.0 / (2 * n_pos))
        l_off = (off_pred - tgt.offset[rows].astype(off_pred.dtype)).abs() \
            .sum() * (1.0 / (2 * n_pos))
    else:
        l_size = as_tensor(np.zeros((), dtype=x.data.dtype))
        l_off = as_tensor(np.zeros((), dtype=x.data.dtype))

    loss = l_ctr + weights.lambda_size * l_size + weights.lambda_offset * l_off
    parts = {"ctr": float(l_ctr.data), "size": float(l_size.data),
             "off": float(l_off.data), "n_pos": n_pos}
    return loss, parts


# ---------------------------------------------------------------------------
# Decoding

_NEIGHBOR_OFFSETS = [(0, dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                     if (dy, dx) != (0, 0)]


def decode(out: HeadOutput, score_thresh: float = 0.3,
           max_per_frame: int = 500, frame_offset: int = 0,
           video_id: str = "video") -> DetectionSet:
    """Peak-pick all T frames at once and apply offsets/sizes.

    A site survives when its score passes the threshold and is the maximum
    within its frame's 3x3 spatial window; equal scores break toward the
    lexicographically smaller coordinate.
    """
    dets = DetectionSet(video_id)
    if out.n == 0:
        return dets
    st = out.center
    scores = _sigmoid_scores(st.fdata.ravel())
    coords = st.coords
    t_total, h, w = st.shape

    alive = scores >= score_thresh
    rows = np.arange(st.n)
    for d in _NEIGHBOR_OFFSETS:
        cand = coords + np.array(d, dtype=np.int64)
        inb = np.all((cand >= 0) & (cand < np.array(st.shape)), axis=1)
        nrows = st.lookup(cand[inb])
        hit = nrows >= 0
        mine = rows[inb][hit]
        theirs = nrows[hit]
        beaten = (scores[theirs] > scores[mine]) | \
                 ((scores[theirs] == scores[mine]) & (theirs < mine))
        alive[mine[beaten]] = False

    sizes = out.size.fdata
    offsets = out.offset.fdata
    for t in range(t_total):
        sel = np.nonzero(alive & (coords[:, 0] == t))[0]
        if sel.size == 0:
            continue
        order = sel[np.argsort(-scores[sel], kind="stable")][:max_per_frame]
        for r in order:
            cx = float(np.clip(coords[r, 2] + offsets[r, 0], 0, w - 1))
            cy = float(np.clip(coords[r, 1] + offsets[r, 1], 0, h - 1))
            dets.add(Detection(frame=frame_offset + t, cx=cx, cy=cy,
                               w=float(max(sizes[r, 0], 0.1)),
                               h=float(max(sizes[r, 1], 0.1)),
                               score=float(scores[r])))
    return dets


def _sigmoid_scores(x):
    from .engine.autodiff import _sigmoid_np
    return _sigmoid_np(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# Training

def _clip_starts(n_frames: int, t_clip: int) -> list[int]:
    """Non-overlapping clip starts covering the video; tail clip re-anchored."""
    if n_frames <= t_clip:
        return [0]
    starts = list(range(0, n_frames - t_clip + 1, t_clip))
    if starts[-1] + t_clip < n_frames:
        starts.append(n_frames - t_clip)
    return starts


class Trainer:
    """SGD loop over random crops of fixed-length clips."""

    def __init__(self, videos: list[FrameClip], labels: LabelStore,
                 cfg: RunConfig, detector: Detector | None = None):
        self.videos = videos
        self.labels = labels
        self.cfg = cfg
        rng_init = seeded_rng(cfg.seed, "init")
        self.det = detector or Detector(cfg.net_channels(), rng=rng_init)
        self.rng_data = seeded_rng(cfg.seed, "data")
        self.rng_crops = seeded_rng(cfg.seed, "crops")
        self.optim = Adam(self.det.parameters(), cfg.lr)
        self.weights = LossWeights(cfg.lambda_size, cfg.lambda_offset)
        self.clip_index = [(vi, s) for vi, v in enumerate(videos)
                           for s in _clip_starts(v.frames.shape[0],
                                                 cfg.frames_per_clip)]
        self.epoch = 0
        self.history: list[float] = []

    def lr_now(self) -> float:
        lr = self.cfg.lr
        for e in self.cfg.decay_epochs:
            if self.epoch >= e:
                lr *= self.cfg.decay_factor
        return lr

    def _sample(self, vi: int, start: int):
        cfg = self.cfg
        video = self.videos[vi]
        t_clip = min(cfg.frames_per_clip, video.frames.shape[0])
        clip = video.window(start, t_clip)
        h, w = clip.frames.shape[1:]
        ch, cw = min(cfg.crop, h), min(cfg.crop, w)
        y0 = int(self.rng_crops.integers(0, h - ch + 1))
        x0 = int(self.rng_crops.integers(0, w - cw + 1))
        frames = clip.frames[:, y0:y0 + ch, x0:x0 + cw]
        cropped = FrameClip(frames, clip.video_id, clip.start_frame,
                            clip.frame_rate)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyCloudWarning)
            cloud = sample_points(subtract_background(cropped),
                                  ThresholdParams(cfg.k))
        if cloud.is_empty():
            return None
        boxes = []
        for t in range(t_clip):
            frame_boxes = []
            for b in self.labels.get(video.video_id, clip.start_frame + t):
                cx, cy = b.cx - x0, b.cy - y0
                if 0 <= cx < cw and 0 <= cy < ch:
                    frame_boxes.append(BoxLabel(b.frame, cx, cy, b.w, b.h,
                                                b.track_id, b.provenance,
                                                b.round))
            boxes.append(frame_boxes)
        tgt = render_targets(boxes, cloud)
        return cloud_to_tensor(cloud, self.det.dtype), tgt

    def run_epoch(self) -> float:
        cfg = self.cfg
        n_clips = len(self.clip_index)
        if cfg.steps_per_epoch is None:
            n_sel = max(1, int(round(cfg.sample_fraction * n_clips)))
            chosen = self.rng_data.permutation(n_clips)[:n_sel]
            batches = [chosen[i:i + cfg.batch_size]
                       for i in range(0, len(chosen), cfg.batch_size)]
        else:
            batches = [self.rng_data.integers(0, n_clips, size=cfg.batch_size)
                       for _ in range(cfg.steps_per_epoch)]

        losses = []
        for batch in batches:
            self.optim.zero_grad()
            batch_losses = []
            for idx in batch:
                sample = self._sample(*self.clip_index[int(idx)])
                if sample is None:
                    continue
                st, tgt = sample
                st.feats.requires_grad = False
                out = self.det.forward(st, train=True)
                loss, _ = detection_loss(out, tgt, self.weights)
                if not np.isfinite(loss.data):
                    raise Diverged(f"non-finite loss at epoch {self.epoch}")
                loss.backward()
                batch_losses.append(float(loss.data))
            if not batch_losses:
                continue
            scale = 1.0 / len(batch_losses)
            for p in self.optim.params.values():
                if p.grad is not None:
                    p.grad = p.grad * scale
            self.optim.step(self.lr_now())
            losses.append(float(np.mean(batch_losses)))
        self.epoch += 1
        mean = float(np.mean(losses)) if losses else float("nan")
        self.history.append(mean)
        return mean


def train(videos, labels: LabelStore, cfg: RunConfig,
          detector: Detector | None = None, out_dir=None,
          epoch_callback=None):
    """Train for cfg.epochs; checkpoints each epoch when out_dir is given.

    Returns (detector, per-epoch mean losses). `epoch_callback(trainer)`
    runs after every epoch (label evolution hooks in here).
    """
    from pathlib import Path

    trainer = Trainer(videos, labels, cfg, detector)
    out_path = Path(out_dir) if out_dir else None
    if out_path:
        out_path.mkdir(parents=True, exist_ok=True)
    for _ in range(cfg.epochs):
        trainer.run_epoch()
        if out_path:
            trainer.det.save(out_path / f"ckpt_epoch{trainer.epoch:03d}.svck",
                             {"epoch": trainer.epoch})
        if epoch_callback is not None:
            epoch_callback(trainer)
    if out_path:
        trainer.det.save(out_path / "ckpt_final.svck",
                         {"epoch": trainer.epoch})
    return trainer.det, trainer.history


def infer_video(det: Detector, video: FrameClip, cfg: RunConfig) -> DetectionSet:
    """Decode a whole video in fixed-length clips (tail clip re-anchored)."""
    dets = DetectionSet(video.video_id)
    n = video.frames.shape[0]
    t_clip = min(cfg.frames_per_clip, n)
    covered = 0
    with no_grad():
        for start in _clip_starts(n, t_clip):
            clip = video.window(start, t_clip)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", EmptyCloudWarning)
                cloud = sample_points(subtract_background(clip),
                                      ThresholdParams(cfg.k))
            if cloud.is_empty():
                covered = max(covered, start + t_clip)
                continue
            out = det.forward(cloud_to_tensor(cloud, det.dtype), train=False)
            chunk = decode(out, cfg.score_thresh, cfg.max_per_frame,
                           frame_offset=clip.start_frame,
                           video_id=video.video_id)
            for d in chunk.all():
                if d.frame >= covered:
                    dets.add(d)
            covered = max(covered, start + t_clip)
    return dets
