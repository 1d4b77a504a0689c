"""Video clip and label I/O, plus a synthetic desk-scale video generator.

Frame directories follow ``<video_id>/img<NNNNNN>.pgm|png`` with 6-digit,
1-based indices. Label stores round-trip through a flat CSV
(``video_id,frame,cx,cy,w,h,track_id,provenance,round``).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidConfig, MissingFrame, ParseError, ShapeMismatch

# ITU-R 601 luma weights used for any color input.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

PROVENANCES = ("manual", "initial", "evolved")

LABEL_CSV_HEADER = ["video_id", "frame", "cx", "cy", "w", "h",
                    "track_id", "provenance", "round"]


def _fmt_float(v: float) -> str:
    # Lossless shortest decimal with at least 3 fractional digits.
    return np.format_float_positional(float(v), unique=True, min_digits=3)


@dataclass
class FrameClip:
    """A fixed-length window of grayscale frames, intensities in [0, 255]."""

    frames: np.ndarray        # (T, H, W) float
    video_id: str = "video"
    start_frame: int = 0
    frame_rate: float = 10.0  # metadata only

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3:
            raise ShapeMismatch(f"frames must be T x H x W, got {self.frames.shape}")
        t, h, w = self.frames.shape
        if t < 2 or h < 1 or w < 1:
            raise ShapeMismatch(f"clip needs T >= 2 and H, W >= 1, got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("clip intensities must be finite")
        if self.frames.min() < 0 or self.frames.max() > 255:
            raise ValueError("clip intensities must lie in [0, 255]")

    @property
    def shape(self):
        return self.frames.shape

    def window(self, start: int, length: int) -> "FrameClip":
        """Sub-clip of `length` frames starting at local index `start`."""
        if start < 0 or start + length > self.frames.shape[0]:
            raise MissingFrame(f"window [{start}, {start + length}) outside clip of "
                               f"{self.frames.shape[0]} frames")
        return FrameClip(self.frames[start:start + length].copy(), self.video_id,
                         self.start_frame + start, self.frame_rate)


@dataclass
class BoxLabel:
    """One annotated box: center+size in pixels, with provenance bookkeeping."""

    frame: int
    cx: float
    cy: float
    w: float
    h: float
    track_id: int | None = None
    provenance: str = "manual"
    round: int = 0

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box size must be positive, got w={self.w}, h={self.h}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def center(self):
        return self.cx, self.cy


class LabelStore:
    """Per-video, per-frame box labels.

    `round` tracks the highest evolution round present; it is recomputed
    from rows on load. Mutation is single-writer by convention.
    """

    def __init__(self):
        self._data: dict[str, dict[int, list[BoxLabel]]] = {}
        self.round = 0

    def add(self, video_id: str, label: BoxLabel):
        frames = self._data.setdefault(video_id, {})
        boxes = frames.setdefault(int(label.frame), [])
        for b in boxes:
            if (b.cx, b.cy, b.provenance) == (label.cx, label.cy, label.provenance):
                raise ValueError(
                    f"duplicate label at ({label.cx}, {label.cy}) in "
                    f"{video_id} frame {label.frame}")
        boxes.append(label)
        if label.round > self.round:
            self.round = label.round

    def get(self, video_id: str, frame: int) -> list[BoxLabel]:
        return list(self._data.get(video_id, {}).get(int(frame), ()))

    def videos(self) -> list[str]:
        return sorted(self._data)

    def frames(self, video_id: str) -> list[int]:
        return sorted(self._data.get(video_id, ()))

    def iter_labels(self):
        for vid in self.videos():
            for fr in self.frames(vid):
                for b in self._data[vid][fr]:
                    yield vid, b

    def __len__(self):
        return sum(len(boxes) for frames in self._data.values()
                   for boxes in frames.values())

    def count(self, provenance: str | None = None) -> int:
        if provenance is None:
            return len(self)
        return sum(1 for _, b in self.iter_labels() if b.provenance == provenance)

    def copy(self) -> "LabelStore":
        out = LabelStore()
        for vid, b in self.iter_labels():
            out.add(vid, replace(b))
        out.round = self.round
        return out

    def _key(self):
        return sorted((vid, b.frame, b.cx, b.cy, b.w, b.h, b.track_id,
                       b.provenance, b.round) for vid, b in self.iter_labels())

    def __eq__(self, other):
        if not isinstance(other, LabelStore):
            return NotImplemented
        return self._key() == other._key()


# ---------------------------------------------------------------------------
# Disk I/O

def _frame_path(directory: Path, index: int) -> Path:
    """Path of 0-based frame `index`; files are 1-based on disk."""
    stem = directory / f"img{index + 1:06d}"
    for ext in (".pgm", ".png"):
        p = stem.with_suffix(ext)
        if p.exists():
            return p
    raise MissingFrame(f"no frame file {stem}.pgm/.png")


def _read_gray(path: Path) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.ndim == 2:
        return arr.astype(np.float64)
    if arr.ndim == 3:
        rgb = arr[..., :3].astype(np.float64)
        return rgb @ np.array(LUMA_WEIGHTS)
    raise ShapeMismatch(f"unsupported image layout {arr.shape} in {path}")


def load_clip(directory, start: int, length: int) -> FrameClip:
    """Load frames [start, start+length) from a frame directory.

    Raises MissingFrame when an index has no file and ShapeMismatch when
    frame sizes differ.
    """
    directory = Path(directory)
    if length < 2:
        raise InvalidConfig("clip length must be >= 2")
    frames = []
    shape = None
    for i in range(start, start + length):
        arr = _read_gray(_frame_path(directory, i))
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise ShapeMismatch(
                f"frame {i} has shape {arr.shape}, expected {shape}")
        frames.append(arr)
    return FrameClip(np.stack(frames), video_id=directory.name, start_frame=start)


def save_clip(clip: FrameClip, directory) -> None:
    """Write a clip as 8-bit binary PGM frames (quantized with rounding)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.rint(clip.frames), 0, 255).astype(np.uint8)
    h, w = data.shape[1:]
    header = f"P5\n{w} {h}\n255\n".encode()
    for t in range(data.shape[0]):
        idx = clip.start_frame + t
        path = directory / f"img{idx + 1:06d}.pgm"
        with open(path, "wb") as f:
            f.write(header)
            f.write(data[t].tobytes())


def n_frames_on_disk(directory) -> int:
    directory = Path(directory)
    n = 0
    for name in os.listdir(directory):
        if name.startswith("img") and name.endswith((".pgm", ".png")):
            n += 1
    return n


def save_labels(store: LabelStore, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(LABEL_CSV_HEADER)
        for vid, b in store.iter_labels():
            writer.writerow([
                vid, b.frame, _fmt_float(b.cx), _fmt_float(b.cy),
                _fmt_float(b.w), _fmt_float(b.h),
                "" if b.track_id is None else b.track_id,
                b.provenance, b.round,
            ])


def load_labels(path) -> LabelStore:
    store = LabelStore()
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != LABEL_CSV_HEADER:
            raise ParseError(f"line 1: bad header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(LABEL_CSV_HEADER):
                raise ParseError(f"line {lineno}: expected "
                                 f"{len(LABEL_CSV_HEADER)} fields, got {len(row)}")
            try:
                label = BoxLabel(
                    frame=int(row[1]), cx=float(row[2]), cy=float(row[3]),
                    w=float(row[4]), h=float(row[5]),
                    track_id=None if row[6] == "" else int(row[6]),
                    provenance=row[7], round=int(row[8]))
                store.add(row[0], label)
            except (ValueError, ArithmeticError) as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc
    return store


# ---------------------------------------------------------------------------
# Synthetic desk-scale videos

@dataclass
class SynthConfig:
    """Synthetic moving-target video: squares on a static textured background.

    `speeds` is either a list of (vx, vy) per target or a (lo, hi) magnitude
    range sampled per target with a random direction. `target_intensity_delta`
    is a scalar or (lo, hi) range. Positive speeds move right/down; targets
    reflect at the borders so they never leave the frame.
    """

    size: tuple[int, int] = (64, 64)      # (H, W)
    frames: int = 40
    n_targets: int = 2
    video_id: str = "synth"
    target_intensity_delta: float | tuple[float, float] = 60.0
    speeds: tuple[float, float] | list[tuple[float, float]] = (0.7, 1.5)
    noise_sigma: float = 2.0
    n_clutter_blinks: int = 0
    seed: int = 0
    target_size_range: tuple[int, int] = (2, 4)
    starts: list[tuple[float, float]] | None = None   # explicit (cx, cy)
    background_range: tuple[float, float] = (70.0, 170.0)
    jitter_px: float = 0.0   # per-frame sub-pixel platform shake (std, px)
    speckle_fraction: float = 0.0   # static high-contrast structure density


def _reflect(value: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Triangle-wave reflection of `value` into [lo, hi]."""
    if hi <= lo:
        return np.full_like(value, lo)
    period = 2.0 * (hi - lo)
    x = np.mod(value - lo, period)
    x = np.where(x < 0, x + period, x)
    return lo + np.where(x <= (hi - lo), x, period - x)


def _make_background(rng, h, w, lo, hi):
    # Coarse bilinear-upsampled field plus fine per-pixel grain, so platform
    # jitter produces realistic edge clutter.
    gh, gw = max(2, h // 8), max(2, w // 8)
    coarse = rng.uniform(0.0, 1.0, size=(gh, gw))
    yi = np.linspace(0, gh - 1, h)
    xi = np.linspace(0, gw - 1, w)
    y0 = np.floor(yi).astype(int).clip(0, gh - 2)
    x0 = np.floor(xi).astype(int).clip(0, gw - 2)
    fy = (yi - y0)[:, None]
    fx = (xi - x0)[None, :]
    c00 = coarse[np.ix_(y0, x0)]
    c01 = coarse[np.ix_(y0, x0 + 1)]
    c10 = coarse[np.ix_(y0 + 1, x0)]
    c11 = coarse[np.ix_(y0 + 1, x0 + 1)]
    tex = (c00 * (1 - fy) * (1 - fx) + c01 * (1 - fy) * fx
           + c10 * fy * (1 - fx) + c11 * fy * fx)
    grain = rng.uniform(-0.15, 0.15, size=(h, w))
    return lo + np.clip(tex + grain, 0.0, 1.0) * (hi - lo)


def synth_video(cfg: SynthConfig) -> tuple[FrameClip, LabelStore]:
    """Render a synthetic video and its exact constant-velocity ground truth."""
    h, w = cfg.size
    if cfg.frames < 2:
        raise InvalidConfig("need at least 2 frames")
    smin, smax = cfg.target_size_range
    if smin < 1 or smax < smin:
        raise InvalidConfig(f"bad target size range {cfg.target_size_range}")
    margin = smax / 2.0 + 1.0
    if 2 * margin >= min(h, w):
        raise InvalidConfig(
            f"targets of size up to {smax} cannot fit in a {h}x{w} image")

    rng = np.random.default_rng(cfg.seed)
    background = _make_background(rng, h, w, *cfg.background_range)
    if cfg.speckle_fraction > 0:
        # static high-contrast points (rocks, markings, building corners);
        # under platform jitter these become the dominant clutter source
        n_speckle = int(round(cfg.speckle_fraction * h * w))
        sy = rng.integers(0, h, size=n_speckle)
        sx = rng.integers(0, w, size=n_speckle)
        amp = rng.uniform(40.0, 90.0, size=n_speckle) * \
            rng.choice([-1.0, 1.0], size=n_speckle)
        background[sy, sx] = np.clip(background[sy, sx] + amp, 0.0, 255.0)

    sizes = rng.integers(smin, smax + 1, size=cfg.n_targets)
    if isinstance(cfg.target_intensity_delta, (tuple, list)):
        deltas = rng.uniform(*cfg.target_intensity_delta, size=cfg.n_targets)
    else:
        deltas = np.full(cfg.n_targets, float(cfg.target_intensity_delta))
    # Alternate the contrast sign so both bright and dark vehicles occur.
    signs = np.where(np.arange(cfg.n_targets) % 2 == 0, 1.0, -1.0)

    if isinstance(cfg.speeds, list):
        if len(cfg.speeds) != cfg.n_targets:
            raise InvalidConfig("speeds list must have one entry per target")
        velocities = np.array(cfg.speeds, dtype=float)
    else:
        mag = rng.uniform(*cfg.speeds, size=cfg.n_targets)
        ang = rng.uniform(0, 2 * np.pi, size=cfg.n_targets)
        velocities = np.stack([mag * np.cos(ang), mag * np.sin(ang)], axis=1)

    if cfg.starts is not None:
        if len(cfg.starts) != cfg.n_targets:
            raise InvalidConfig("starts list must have one entry per target")
        starts = np.array(cfg.starts, dtype=float)
    else:
        starts = np.stack([
            rng.uniform(margin, w - 1 - margin, size=cfg.n_targets),
            rng.uniform(margin, h - 1 - margin, size=cfg.n_targets),
        ], axis=1)

    t_idx = np.arange(cfg.frames, dtype=float)
    # (n_targets, frames) reflected center trajectories
    cxs = _reflect(starts[:, 0:1] + velocities[:, 0:1] * t_idx, margin, w - 1 - margin)
    cys = _reflect(starts[:, 1:2] + velocities[:, 1:2] * t_idx, margin, h - 1 - margin)

    if cfg.jitter_px > 0:
        from scipy import ndimage
        shifts = rng.normal(0.0, cfg.jitter_px, size=(cfg.frames, 2))
        frames = np.stack([
            ndimage.shift(background, shifts[t], order=1, mode="nearest")
            for t in range(cfg.frames)])
    else:
        frames = np.repeat(background[None], cfg.frames, axis=0)
    store = LabelStore()
    for i in range(cfg.n_targets):
        s = int(sizes[i])
        amp = signs[i] * deltas[i]
        for t in range(cfg.frames):
            cx, cy = cxs[i, t], cys[i, t]
            x0 = int(round(cx - (s - 1) / 2.0))
            y0 = int(round(cy - (s - 1) / 2.0))
            x0 = min(max(x0, 0), w - s)
            y0 = min(max(y0, 0), h - s)
            frames[t, y0:y0 + s, x0:x0 + s] += amp
            store.add(cfg.video_id, BoxLabel(frame=t, cx=float(cx), cy=float(cy),
                                        w=float(s), h=float(s), track_id=i,
                                        provenance="manual"))

    for _ in range(cfg.n_clutter_blinks):
        bt = int(rng.integers(0, cfg.frames))
        by = int(rng.integers(0, h))
        bx = int(rng.integers(0, w))
        bs = int(rng.integers(1, 3))
        amp = rng.choice([-1.0, 1.0]) * rng.uniform(40.0, 90.0)
        frames[bt, by:min(by + bs, h), bx:min(bx + bs, w)] += amp

    if cfg.noise_sigma > 0:
        frames = frames + rng.normal(0.0, cfg.noise_sigma, size=frames.shape)

    frames = np.clip(frames, 0.0, 255.0)
    clip = FrameClip(frames, video_id=cfg.video_id, start_frame=0)
    return clip, store
