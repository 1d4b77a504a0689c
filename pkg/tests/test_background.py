import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svmod.background import compute_residuals, subtract_background, temporal_median
from svmod.data import FrameClip
from svmod.errors import ShapeMismatch


def sort_oracle_median(frames):
    """Full-sort per-pixel median; even T = mean of the two central values."""
    s = np.sort(frames, axis=0)
    t = frames.shape[0]
    if t % 2 == 1:
        return s[t // 2]
    return (s[t // 2 - 1] + s[t // 2]) / 2.0


def clip_from_series(series):
    # one pixel per series entry, replicated into a 1x1 frame
    arr = np.asarray(series, dtype=float).reshape(-1, 1, 1)
    return FrameClip(arr)


class TestTemporalMedian:
    def test_odd_series(self):
        clip = clip_from_series([12, 10, 200, 11, 12])
        assert temporal_median(clip)[0, 0] == 12

    def test_even_series_mean_of_central(self):
        clip = clip_from_series([1, 2, 3, 4])
        assert temporal_median(clip)[0, 0] == 2.5

    def test_identical_frames(self, rng):
        frame = rng.uniform(0, 255, size=(5, 6))
        clip = FrameClip(np.repeat(frame[None], 4, axis=0))
        assert np.array_equal(temporal_median(clip), frame)

    @given(t=st.integers(2, 9), seed=st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_matches_sort_oracle(self, t, seed):
        rng = np.random.default_rng(seed)
        frames = rng.uniform(0, 255, size=(t, 4, 5))
        got = temporal_median(FrameClip(frames))
        want = sort_oracle_median(frames)
        assert np.array_equal(got, want)

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        frames = rng.uniform(0, 255, size=(7, 3, 3))
        perm = rng.permutation(7)
        a = temporal_median(FrameClip(frames))
        b = temporal_median(FrameClip(frames[perm]))
        assert np.array_equal(a, b)

    def test_robust_to_minority_outliers(self, rng):
        t = 9
        frames = np.full((t, 4, 4), 50.0)
        # up to floor((T-1)/2) = 4 outlier frames per pixel
        frames[:4] += rng.uniform(50, 150, size=(4, 4, 4))
        assert np.array_equal(temporal_median(FrameClip(frames)),
                              np.full((4, 4), 50.0))


class TestResiduals:
    def test_static_clip_zero_residuals(self):
        frames = np.full((4, 3, 3), 42.0)
        res = subtract_background(FrameClip(frames))
        assert np.all(res.residuals == 0)

    def test_sign_preserved(self):
        clip = clip_from_series([42, 42, 30])
        res = compute_residuals(clip, np.array([[42.0]]))
        assert res.residuals[2, 0, 0] == -12.0

    def test_reconstruction_exact_on_8bit(self, rng):
        # 8-bit intensities and their medians are multiples of 0.5, so the
        # subtraction is exact and reconstruction is bit-identical
        frames = rng.integers(0, 256, size=(6, 5, 4)).astype(float)
        clip = FrameClip(frames)
        res = subtract_background(clip)
        assert np.array_equal(res.residuals + res.background[None], frames)

    def test_reconstruction_close_on_floats(self, rng):
        frames = rng.uniform(0, 255, size=(6, 5, 4))
        res = subtract_background(FrameClip(frames))
        assert np.allclose(res.residuals + res.background[None], frames,
                           rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        clip = FrameClip(np.zeros((3, 4, 4)))
        with pytest.raises(ShapeMismatch):
            compute_residuals(clip, np.zeros((5, 5)))
