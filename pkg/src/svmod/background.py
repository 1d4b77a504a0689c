"""Temporal-median background estimation and signed residuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FrameClip
from .errors import ShapeMismatch


@dataclass
class ResidualClip:
    """Signed residuals (frame - background) for one clip."""

    residuals: np.ndarray   # (T, H, W) signed floats
    background: np.ndarray  # (H, W)

    @property
    def shape(self):
        return self.residuals.shape


def temporal_median(clip: FrameClip) -> np.ndarray:
    """Per-pixel median over the clip's frames.

    For even T this is the mean of the two central order statistics.
    """
    return np.median(clip.frames, axis=0)


def compute_residuals(clip: FrameClip, background: np.ndarray) -> ResidualClip:
    """Signed residuals: residuals[t] = frames[t] - background."""
    background = np.asarray(background, dtype=np.float64)
    if background.shape != clip.frames.shape[1:]:
        raise ShapeMismatch(
            f"background {background.shape} does not match frames "
            f"{clip.frames.shape[1:]}")
    return ResidualClip(clip.frames - background[None], background)


def subtract_background(clip: FrameClip) -> ResidualClip:
    """Convenience: temporal median then residuals."""
    return compute_residuals(clip, temporal_median(clip))
