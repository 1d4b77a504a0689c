import json

import numpy as np
import pytest

from svmod.cli import main
from svmod.config import RunConfig, seeded_rng
from svmod.errors import InvalidConfig


class TestRunConfig:
    def test_defaults_mirror_reference_operating_point(self):
        cfg = RunConfig()
        assert cfg.frames_per_clip == 20
        assert cfg.batch_size == 6
        assert cfg.crop == 256
        assert cfg.lr == pytest.approx(1.25e-4)
        assert cfg.epochs == 55
        assert cfg.decay_epochs == (30, 45)
        assert cfg.update_period == 10
        assert cfg.k == 3.0
        assert cfg.min_track_len == 30
        assert cfg.min_velocity == 0.55
        assert cfg.d_max == 5.0
        assert cfg.depth == 3
        assert cfg.net_channels() == (16, 32, 64)

    def test_unknown_keys_rejected(self):
        with pytest.raises(InvalidConfig, match="unknown config keys"):
            RunConfig.from_dict({"k": 3.0, "bogus_knob": 1})

    def test_validation_names_field(self):
        with pytest.raises(InvalidConfig, match="depth"):
            RunConfig(depth=7)
        with pytest.raises(InvalidConfig, match="k must"):
            RunConfig(k=-1)

    def test_json_roundtrip(self, tmp_path):
        cfg = RunConfig(k=5.0, depth=2, channels=(8, 16), seed=9)
        cfg.save(tmp_path / "cfg.json")
        back = RunConfig.load(tmp_path / "cfg.json")
        assert back.k == 5.0
        assert back.net_channels() == (8, 16)
        assert back.seed == 9

    def test_named_rng_streams_independent(self):
        a = seeded_rng(3, "data").integers(0, 1 << 30, 8)
        b = seeded_rng(3, "init").integers(0, 1 << 30, 8)
        a2 = seeded_rng(3, "data").integers(0, 1 << 30, 8)
        assert np.array_equal(a, a2)
        assert not np.array_equal(a, b)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth -> pseudo-label -> train -> infer -> eval, desk scale."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    common = ["--frames-per-clip", "10", "--seed", "3"]
    rc = main(["synth", "--out", str(data), "--video-id", "v000",
               "--size", "48", "--frames", "20", "--targets", "2",
               "--noise", "2.0", "--blinks", "2"] + common)
    assert rc == 0
    return root, data, common


class TestCliWorkflow:
    def test_synth_wrote_frames_and_labels(self, workspace):
        root, data, _ = workspace
        assert (data / "v000" / "img000001.pgm").exists()
        assert (data / "v000_gt.csv").exists()
        assert (data / "manifest.json").exists()

    def test_pseudo_label(self, workspace):
        root, data, common = workspace
        out = root / "pseudo"
        rc = main(["pseudo-label", "--data", str(data), "--videos", "v000",
                   "--out", str(out), "--k", "3", "--min-track-len", "8",
                   "--debug-dump", str(root / "debug")] + common)
        assert rc == 0
        assert (out / "labels_round0.csv").exists()
        dump = root / "debug" / "v000"
        assert (dump / "background_000000" / "img000001.pgm").exists()
        assert (dump / "residual_abs" / "img000001.pgm").exists()
        points = (dump / "points_000000.csv").read_text().splitlines()
        assert points[0] == "t,y,x,feat"

    def test_train_infer_eval(self, workspace):
        root, data, common = workspace
        out = root / "train"
        rc = main(["train", "--data", str(data), "--videos", "v000",
                   "--labels", str(data / "v000_gt.csv"),
                   "--out", str(out), "--epochs", "1",
                   "--steps-per-epoch", "2", "--batch-size", "2",
                   "--crop", "48", "--depth", "2", "--channels", "4,8",
                   "--lr", "2e-3"] + common)
        assert rc == 0
        ckpt = out / "ckpt_final.svck"
        assert ckpt.exists()

        inf = root / "infer"
        rc = main(["infer", "--data", str(data), "--videos", "v000",
                   "--checkpoint", str(ckpt), "--out", str(inf),
                   "--score-thresh", "0.05"] + common)
        assert rc == 0
        dets_csv = inf / "detections.csv"
        assert dets_csv.exists()

        ev = root / "eval"
        rc = main(["eval", "--dets", str(dets_csv),
                   "--labels", str(data / "v000_gt.csv"),
                   "--out", str(ev)] + common)
        assert rc == 0
        report = json.loads((ev / "eval.json").read_text())
        assert "avg_f1" in report

    def test_track_subcommand(self, workspace, tmp_path):
        root, data, common = workspace
        # build a detections CSV from the ground truth
        from svmod.data import load_labels
        from svmod.detector import Detection, DetectionSet, save_detections
        gt = load_labels(data / "v000_gt.csv")
        ds = DetectionSet("v000")
        for vid, b in gt.iter_labels():
            ds.add(Detection(b.frame, b.cx, b.cy, b.w, b.h, 0.9))
        dets_csv = tmp_path / "dets.csv"
        save_detections(ds, dets_csv)
        out = tmp_path / "tracks"
        rc = main(["track", "--detections", str(dets_csv),
                   "--out", str(out)] + common)
        assert rc == 0
        assert (out / "tracks_v000.csv").exists()

    def test_manifest_reproducibility_fields(self, workspace):
        root, data, _ = workspace
        manifest = json.loads((data / "manifest.json").read_text())
        assert set(manifest) == {"command", "version", "seed", "config"}
        assert manifest["config"]["k"] == 3.0

    def test_bad_flag_value_exits_nonzero(self, workspace, capsys):
        root, data, common = workspace
        rc = main(["pseudo-label", "--data", str(data), "--out",
                   str(root / "x"), "--k", "-2"])
        assert rc != 0
        assert "k must be" in capsys.readouterr().err

    def test_unknown_config_key_in_file(self, tmp_path, capsys):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"k": 3.0, "mystery": 1}))
        rc = main(["synth", "--out", str(tmp_path / "o"),
                   "--config", str(cfg_file)])
        assert rc != 0
        assert "unknown config keys" in capsys.readouterr().err

    def test_bench_no_dense_smoke(self, tmp_path):
        out = tmp_path / "bench"
        rc = main(["bench", "--out", str(out), "--size", "64",
                   "--frames", "8", "--targets", "2", "--noise", "3",
                   "--frames-per-clip", "8", "--depth", "2",
                   "--channels", "4,8", "--runs", "5", "--no-dense",
                   "--seed", "0"])
        assert rc == 0
        report = json.loads((out / "bench.json").read_text())
        assert report["fps"] > 0
        assert report["macs_sparse"] > 0
        assert report["macs_dense"] > report["macs_sparse"]
