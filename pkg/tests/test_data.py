import numpy as np
import pytest

from svmod.data import (BoxLabel, FrameClip, LabelStore, SynthConfig,
                        load_clip, load_labels, save_clip, save_labels,
                        synth_video)
from svmod.errors import InvalidConfig, MissingFrame, ParseError, ShapeMismatch


def write_frames(directory, frames, ext=".pgm"):
    clip = FrameClip(np.asarray(frames, dtype=float))
    if ext == ".pgm":
        save_clip(clip, directory)
    else:
        from PIL import Image
        directory.mkdir(parents=True, exist_ok=True)
        for t in range(clip.frames.shape[0]):
            img = Image.fromarray(clip.frames[t].astype(np.uint8))
            img.save(directory / f"img{t + 1:06d}.png")


class TestLoadClip:
    def test_reads_identical_frames(self, tmp_path):
        frames = np.full((30, 4, 4), 7.0)
        write_frames(tmp_path / "vid", frames)
        clip = load_clip(tmp_path / "vid", 0, 20)
        assert clip.frames.shape == (20, 4, 4)
        assert np.all(clip.frames == 7.0)
        assert clip.video_id == "vid"

    def test_missing_frame(self, tmp_path):
        write_frames(tmp_path / "vid", np.zeros((30, 4, 4)))
        with pytest.raises(MissingFrame):
            load_clip(tmp_path / "vid", 25, 20)

    def test_shape_mismatch(self, tmp_path):
        d = tmp_path / "vid"
        write_frames(d, np.zeros((2, 4, 4)))
        # overwrite the second frame with a different size
        save_clip(FrameClip(np.zeros((2, 5, 5)), start_frame=1), d)
        with pytest.raises(ShapeMismatch):
            load_clip(d, 0, 2)

    def test_png_and_pgm_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        frames = rng.integers(0, 256, size=(4, 6, 5)).astype(float)
        write_frames(tmp_path / "a", frames, ".pgm")
        write_frames(tmp_path / "b", frames, ".png")
        a = load_clip(tmp_path / "a", 0, 4)
        b = load_clip(tmp_path / "b", 0, 4)
        assert np.array_equal(a.frames, frames)
        assert np.array_equal(b.frames, frames)

    def test_save_load_identity_on_quantized(self, tmp_path):
        rng = np.random.default_rng(3)
        frames = rng.uniform(0, 255, size=(5, 8, 8))
        quantized = np.clip(np.rint(frames), 0, 255)
        save_clip(FrameClip(frames), tmp_path / "v")
        back = load_clip(tmp_path / "v", 0, 5)
        assert np.array_equal(back.frames, quantized)

    def test_rgb_png_uses_luma(self, tmp_path):
        from PIL import Image
        d = tmp_path / "vid"
        d.mkdir()
        rgb = np.zeros((4, 4, 3), dtype=np.uint8)
        rgb[..., 0] = 100
        rgb[..., 1] = 50
        rgb[..., 2] = 200
        for t in range(2):
            Image.fromarray(rgb).save(d / f"img{t + 1:06d}.png")
        clip = load_clip(d, 0, 2)
        expected = 0.299 * 100 + 0.587 * 50 + 0.114 * 200
        assert np.allclose(clip.frames, expected)


class TestFrameClip:
    def test_rejects_short_clip(self):
        with pytest.raises(ShapeMismatch):
            FrameClip(np.zeros((1, 4, 4)))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            FrameClip(np.full((3, 2, 2), 300.0))


class TestSynthVideo:
    def test_no_targets_no_noise_is_static(self):
        cfg = SynthConfig(size=(16, 16), frames=5, n_targets=0,
                          noise_sigma=0.0, seed=1)
        clip, labels = synth_video(cfg)
        assert len(labels) == 0
        for t in range(1, 5):
            assert np.array_equal(clip.frames[t], clip.frames[0])

    def test_constant_velocity_kinematics(self):
        cfg = SynthConfig(size=(64, 64), frames=10, n_targets=1,
                          noise_sigma=0.0, speeds=[(1.0, 0.0)],
                          starts=[(10.0, 10.0)], seed=2)
        clip, labels = synth_video(cfg)
        for t in range(10):
            (box,) = labels.get(cfg.video_id, t)
            assert box.cx == pytest.approx(10.0 + t)
            assert box.cy == pytest.approx(10.0)

    def test_deterministic(self):
        cfg = SynthConfig(size=(32, 32), frames=8, n_targets=3,
                          noise_sigma=2.0, n_clutter_blinks=5, seed=7)
        c1, l1 = synth_video(cfg)
        c2, l2 = synth_video(cfg)
        assert np.array_equal(c1.frames, c2.frames)
        assert l1 == l2

    def test_reflection_keeps_labels_in_bounds(self):
        cfg = SynthConfig(size=(24, 24), frames=200, n_targets=3,
                          speeds=(1.0, 2.0), noise_sigma=0.0, seed=5)
        _, labels = synth_video(cfg)
        for _, b in labels.iter_labels():
            assert 0 <= b.cx < 24
            assert 0 <= b.cy < 24

    def test_labels_match_rendered_targets(self):
        cfg = SynthConfig(size=(48, 48), frames=12, n_targets=2,
                          noise_sigma=0.0, seed=9)
        clip, labels = synth_video(cfg)
        bg = clip.frames[0] * 0  # rendered background without targets
        static = SynthConfig(size=(48, 48), frames=12, n_targets=0,
                             noise_sigma=0.0, seed=9)
        bg_clip, _ = synth_video(static)
        for t in range(12):
            diff = np.abs(clip.frames[t] - bg_clip.frames[t])
            ys, xs = np.nonzero(diff > 1)
            for _, b in [(v, b) for v, b in labels.iter_labels()
                         if b.frame == t]:
                # the rendered blob sits within 2 px of the label center
                d = np.hypot(xs - b.cx, ys - b.cy)
                assert d.min() <= 2.0

    def test_invalid_config(self):
        with pytest.raises(InvalidConfig):
            synth_video(SynthConfig(size=(4, 4), frames=5, n_targets=1,
                                    target_size_range=(4, 4)))


class TestLabelCsv:
    def make_store(self):
        store = LabelStore()
        store.add("v1", BoxLabel(0, 10.25, 11.5, 3, 3, track_id=4,
                                 provenance="manual"))
        store.add("v1", BoxLabel(1, 0.123456789, 5.0, 2.5, 2.0,
                                 provenance="initial"))
        store.add("v2", BoxLabel(7, 30.0, 40.0, 4, 2, track_id=1,
                                 provenance="evolved", round=2))
        return store

    def test_round_trip_lossless(self, tmp_path):
        store = self.make_store()
        path = tmp_path / "labels.csv"
        save_labels(store, path)
        back = load_labels(path)
        assert back == store
        assert back.round == 2

    def test_empty_store_is_header_only(self, tmp_path):
        path = tmp_path / "labels.csv"
        save_labels(LabelStore(), path)
        lines = path.read_text().strip().splitlines()
        assert lines == ["video_id,frame,cx,cy,w,h,track_id,provenance,round"]
        assert len(load_labels(path)) == 0

    def test_nonpositive_size_is_parse_error(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("video_id,frame,cx,cy,w,h,track_id,provenance,round\n"
                        "v1,0,1.000,1.000,0.000,2.000,,manual,0\n")
        with pytest.raises(ParseError, match="line 2"):
            load_labels(path)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("nope\nv,0,1,1,1,1,,manual,0\n")
        with pytest.raises(ParseError, match="line 1"):
            load_labels(path)

    def test_floats_have_three_decimals(self, tmp_path):
        path = tmp_path / "labels.csv"
        save_labels(self.make_store(), path)
        row = path.read_text().splitlines()[1].split(",")
        assert row[2] == "10.250"
        assert row[4] == "3.000"

    def test_duplicate_label_rejected(self):
        store = LabelStore()
        store.add("v", BoxLabel(0, 1.0, 2.0, 3, 3))
        with pytest.raises(ValueError):
            store.add("v", BoxLabel(0, 1.0, 2.0, 4, 4))
