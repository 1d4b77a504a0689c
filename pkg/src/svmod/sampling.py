"""Adaptive-threshold sparse sampling of residual clips into point clouds.

Each frame's threshold is ``th = mean(|r|) + k * std(|r|)`` (population
std); pixels with ``|r| > th`` (strictly) become points carrying the signed
residual scaled by 1/255 as their single feature channel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .background import ResidualClip
from .errors import EmptyCloudWarning


@dataclass
class ThresholdParams:
    k: float = 3.0
    per_frame: bool = True   # statistics over each frame vs. the whole clip

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")


@dataclass
class PointCloud:
    """Sparse spatio-temporal points: integer (t, y, x) coords + features."""

    coords: np.ndarray           # (N, 3) int64, lexicographically sorted
    feats: np.ndarray            # (N, C) float
    shape: tuple[int, int, int]  # (T, H, W)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 3)
        feats = np.asarray(self.feats, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        if feats.shape[0] != self.coords.shape[0]:
            raise ValueError(f"feats rows {feats.shape[0]} != "
                             f"coords rows {self.coords.shape[0]}")
        self.feats = feats

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def sampling_ratio(self) -> float:
        t, h, w = self.shape
        return self.n / float(t * h * w)

    def is_empty(self) -> bool:
        return self.n == 0


def adaptive_threshold(residual: np.ndarray, k: float):
    """Threshold one residual image; returns (th, mask) with mask = |r| > th."""
    a = np.abs(np.asarray(residual, dtype=np.float64))
    mu = a.mean()
    sigma = a.std()
    th = mu + k * sigma
    return th, a > th


def sample_points(res: ResidualClip, params: ThresholdParams | None = None) -> PointCloud:
    """Per-frame adaptive thresholding into a point cloud.

    Emits an EmptyCloudWarning (and an empty cloud) when nothing passes.
    """
    params = params or ThresholdParams()
    r = res.residuals
    t_n, h, w = r.shape

    if params.per_frame:
        mask = np.empty(r.shape, dtype=bool)
        for t in range(t_n):
            _, mask[t] = adaptive_threshold(r[t], params.k)
    else:
        _, mask_flat = adaptive_threshold(r.reshape(-1), params.k)
        mask = mask_flat.reshape(r.shape)

    ts, ys, xs = np.nonzero(mask)        # row-major: already (t, y, x) sorted
    coords = np.stack([ts, ys, xs], axis=1).astype(np.int64)
    feats = (r[ts, ys, xs] / 255.0)[:, None]
    cloud = PointCloud(coords, feats, (t_n, h, w))
    if cloud.is_empty():
        warnings.warn("no pixel passed the adaptive threshold in any frame",
                      EmptyCloudWarning, stacklevel=2)
    return cloud


def frame_thresholds(res: ResidualClip, k: float) -> np.ndarray:
    """Per-frame th values (diagnostics; matches sample_points statistics)."""
    return np.array([adaptive_threshold(frame, k)[0] for frame in res.residuals])


@dataclass
class ComponentBox:
    cx: float
    cy: float
    w: float
    h: float
    area: int


def connected_components(mask: np.ndarray, min_area: int = 2) -> list[ComponentBox]:
    """8-connected components of a binary mask as tight boxes.

    Components smaller than `min_area` pixels are discarded. Boxes are
    returned sorted by (cy, cx).
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return []
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    boxes = []
    slices = ndimage.find_objects(labels)
    for i, sl in enumerate(slices, start=1):
        if sl is None:
            continue
        area = int(np.count_nonzero(labels[sl] == i))
        if area < min_area:
            continue
        ys, xs = sl
        h = ys.stop - ys.start
        w = xs.stop - xs.start
        boxes.append(ComponentBox(
            cx=(xs.start + xs.stop - 1) / 2.0,
            cy=(ys.start + ys.stop - 1) / 2.0,
            w=float(w), h=float(h), area=area))
    boxes.sort(key=lambda b: (b.cy, b.cx))
    return boxes


def dump_points_csv(cloud: PointCloud, path) -> None:
    """Debug dump: one `t,y,x,feat` row per point."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("t,y,x,feat\n")
        for (t, y, x), feat in zip(cloud.coords, cloud.feats):
            f.write(f"{t},{y},{x},{feat[0]!r}\n")
