"""Acceptance criteria, one test per criterion, cheap to expensive.

Each test prints a single `ACCEPTANCE n: PASS ...` line (visible with
pytest -s or -rA). The end-to-end criteria share session-scoped synthetic
videos and training runs.
"""

import math
import time
import warnings

import numpy as np
import pytest

from conftest import random_sparse
from reference_results import BENCHMARK_ROWS
from svmod import LabelStore, RunConfig, SynthConfig, score, synth_video
from svmod.background import ResidualClip, subtract_background
from svmod.data import BoxLabel, FrameClip
from svmod.detector import (Detection, Detector, DetectionSet, Trainer,
                            cloud_to_tensor, detection_loss, infer_video,
                            render_targets)
from svmod.engine import SparseConv, SparseTensor, Tensor, build_rulebook, flops
from svmod.engine.dense_ref import (DenseReference, dense_conv3d,
                                    dense_transposed_conv3d)
from svmod.errors import EmptyCloudWarning
from svmod.evaluation import bench, f1_score, match_frame
from svmod.evolution import make_initial_labels, run_framework
from svmod.sampling import ThresholdParams, adaptive_threshold, sample_points
from svmod.tracker import TrackerConfig, TrackSet, filter_tracks

warnings.simplefilter("ignore", EmptyCloudWarning)


def report(n, message):
    print(f"\nACCEPTANCE {n}: PASS - {message}")


# ---------------------------------------------------------------------------
# 1. sparse/dense convolution oracle

class TestCriterion1SparseDenseOracle:
    def test_all_modes_match_dense(self, rng):
        start = time.time()
        worst = 0.0
        cases = 0
        while cases < 100:
            t = int(rng.integers(2, 9))
            h = int(rng.integers(4, 17))
            w = int(rng.integers(4, 17))
            c_in = int(rng.integers(1, 9))
            c_out = int(rng.integers(1, 9))
            density = float(rng.uniform(0.02, 0.3))
            st = random_sparse(rng, (t, h, w), c=c_in, density=density,
                               dtype=np.float64)

            def rel_err(got, want):
                scale = max(1e-9, float(np.abs(want).max()))
                return float(np.abs(got - want).max()) / scale

            sub = SparseConv(c_in, c_out, rng=rng, dtype=np.float64)
            out = sub(st)
            dense = dense_conv3d(st.to_dense(), sub.w.data, sub.b.data)
            worst = max(worst, rel_err(
                out.fdata, dense[out.coords[:, 0], out.coords[:, 1],
                                 out.coords[:, 2]]))

            down = SparseConv(c_in, c_out, stride=(1, 2, 2), mode="strided",
                              rng=rng, dtype=np.float64)
            rb, out_coords = build_rulebook(st, (3, 3, 3), (1, 2, 2),
                                            "strided")
            out_s = down(st, rb)
            dense_s = dense_conv3d(st.to_dense(), down.w.data, down.b.data,
                                   stride=(1, 2, 2))
            worst = max(worst, rel_err(
                out_s.fdata, dense_s[out_s.coords[:, 0], out_s.coords[:, 1],
                                     out_s.coords[:, 2]]))

            up = SparseConv(c_out, c_in, stride=(1, 2, 2), mode="transposed",
                            rng=rng, dtype=np.float64)
            coarse = SparseTensor(out_coords,
                                  rng.normal(size=(out_coords.shape[0],
                                                   c_out)), rb.out_shape)
            out_t = up(coarse, record=rb)
            dense_t = dense_transposed_conv3d(coarse.to_dense(), up.w.data,
                                              up.b.data, stride=(1, 2, 2),
                                              fine_shape=st.shape)
            worst = max(worst, rel_err(
                out_t.fdata, dense_t[out_t.coords[:, 0], out_t.coords[:, 1],
                                     out_t.coords[:, 2]]))
            cases += 1
        elapsed = time.time() - start
        assert worst <= 1e-5
        assert elapsed < 60
        report(1, f"{cases} random tensors x 3 modes, worst rel err "
                  f"{worst:.2e} (<= 1e-5), {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. gradient oracle over a full 2-level net + head

class TestCriterion2GradientOracle:
    def test_every_parameter_and_input(self):
        # fixed generic point: all ReLU inputs keep a >1e-3 margin from
        # their kink, so the h=1e-4 central differences stay in the smooth
        # regime where the derivative being checked actually exists
        rng = np.random.default_rng(21)
        start = time.time()
        shape = (3, 8, 8)
        n_all = int(np.prod(shape))
        keys = np.sort(rng.choice(n_all, size=14, replace=False))
        from svmod.engine.tensor import keys_to_coords
        coords = keys_to_coords(keys, shape)
        x0 = rng.normal(scale=0.4, size=(14, 1))
        det = Detector(channels=(4, 8), rng=rng, dtype=np.float64)

        boxes = [[] for _ in range(3)]
        for row in (2, 7, 11):
            t, y, x = coords[row]
            boxes[int(t)].append(BoxLabel(int(t), float(x) + 0.3,
                                          float(y) - 0.2, 3.0, 3.0))

        from svmod.sampling import PointCloud

        def loss_value():
            cloud = PointCloud(coords, x0, shape)
            st = SparseTensor(coords, Tensor(x0, requires_grad=True), shape)
            out = det.forward(st, train=True)
            tgt = render_targets(boxes, cloud)
            loss, _ = detection_loss(out, tgt)
            return loss, st.feats

        loss, x_tensor = loss_value()
        for p in det.parameters().values():
            p.zero_grad()
        loss.backward()

        arrays = {"input": (x0, x_tensor.grad)}
        for name, p in det.parameters().items():
            arrays[name] = (p.data, p.grad)

        h = 1e-4
        worst = 0.0
        n_checked = 0
        for name, (arr, grad) in arrays.items():
            assert grad is not None, name
            flat = arr.ravel()
            gflat = np.asarray(grad).ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = float(loss_value()[0].data)
                flat[i] = orig - h
                fm = float(loss_value()[0].data)
                flat[i] = orig
                fd = (fp - fm) / (2 * h)
                err = abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-3)
                assert err <= 1e-4, f"{name}[{i}]: fd={fd} got={gflat[i]}"
                worst = max(worst, err)
                n_checked += 1
        elapsed = time.time() - start
        assert elapsed < 120
        report(2, f"{n_checked} partials (every parameter + input), worst "
                  f"rel err {worst:.2e} (<= 1e-4), {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 3. adaptive threshold oracle + monotone sweep

class TestCriterion3ThresholdOracle:
    def test_scalar_oracle_and_k_sweep(self, rng):
        def oracle(frame, k):
            values = [abs(float(v)) for row in frame for v in row]
            n = len(values)
            mu = math.fsum(values) / n
            var = math.fsum((v - mu) ** 2 for v in values) / n
            th = mu + k * math.sqrt(var)
            mask = np.array([[abs(float(v)) > th for v in row]
                             for row in frame])
            return th, mask

        for case in range(1000):
            frame = rng.normal(scale=rng.uniform(1, 20), size=(8, 9))
            k = float(rng.choice([0.5, 1, 2, 3, 5, 8]))
            th, mask = adaptive_threshold(frame, k)
            th_o, mask_o = oracle(frame, k)
            assert np.array_equal(mask, mask_o), case
            assert abs(th - th_o) <= 1e-9 * max(1.0, abs(th_o))

        # sample_points against a per-frame brute force, exactly
        residuals = rng.normal(scale=5, size=(4, 10, 10))
        residuals[1, 3, 3] = 90.0
        res = ResidualClip(residuals, np.zeros((10, 10)))
        cloud = sample_points(res, ThresholdParams(2.0))
        brute = []
        for t in range(4):
            _, m = oracle(residuals[t], 2.0)
            for y in range(10):
                for x in range(10):
                    if m[y, x]:
                        brute.append((t, y, x, residuals[t, y, x] / 255.0))
        assert cloud.n == len(brute)
        for (t, y, x, f), coord, feat in zip(brute, cloud.coords, cloud.feats):
            assert (t, y, x) == tuple(coord) and f == feat[0]

        counts = []
        res_sweep = ResidualClip(rng.normal(scale=6, size=(6, 32, 32)),
                                 np.zeros((32, 32)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyCloudWarning)
            for k in (1, 3, 5, 7, 9, 11, 13, 15):
                counts.append(sample_points(res_sweep,
                                            ThresholdParams(float(k))).n)
        assert all(a >= b for a, b in zip(counts, counts[1:]))
        report(3, f"1000 frames match the scalar oracle exactly; sweep "
                  f"counts {counts} non-increasing in k")


# ---------------------------------------------------------------------------
# 4. temporal median oracle

class TestCriterion4MedianOracle:
    def test_matches_full_sort(self, rng):
        for case in range(200):
            t = int(rng.integers(2, 12))
            frames = rng.uniform(0, 255, size=(t, 6, 7))
            got = np.median(frames, axis=0)
            from svmod.background import temporal_median
            got = temporal_median(FrameClip(frames))
            s = np.sort(frames, axis=0)
            want = s[t // 2] if t % 2 else (s[t // 2 - 1] + s[t // 2]) / 2.0
            assert np.array_equal(got, want), case
        report(4, "200 random clips (odd and even T) equal the full-sort "
                  "oracle exactly")


# ---------------------------------------------------------------------------
# 5. trajectory filter boundaries

class TestCriterion5FilterThresholds:
    def test_boundary_grid(self):
        def linear_track(length, v):
            from test_tracker import linear_track as make
            return make(length, vx=v)

        results = {}
        for length in (29, 30):
            for v in (0.54, 0.55):
                ts = TrackSet(tracks=[linear_track(length, v)])
                kept = len(filter_tracks(ts, min_len=30,
                                         min_velocity=0.55)) == 1
                results[(length, v)] = kept
        assert results == {(29, 0.54): False, (29, 0.55): False,
                           (30, 0.54): False, (30, 0.55): True}
        report(5, "lengths {29,30} x velocities {0.54,0.55} filtered "
                  "exactly per the length-30 / 0.55 px-per-frame rules")


# ---------------------------------------------------------------------------
# 6. evaluation boundary + published-table self-consistency

class TestCriterion6EvaluationBoundary:
    def test_distance_boundary_and_table(self):
        gt = [BoxLabel(0, 10.0, 10.0, 3, 3)]
        d_exact = [Detection(0, 13.0, 14.0, 3, 3, 0.9)]     # distance 5.0
        assert match_frame(d_exact, gt, d_max=5.0) == (1, 0, 0)
        d_over = [Detection(0, 15.000001, 10.0, 3, 3, 0.9)]  # 5.000001
        assert match_frame(d_over, gt, d_max=5.0) == (0, 1, 1)

        worst = 0.0
        for name, (videos, avg) in BENCHMARK_ROWS.items():
            for re, pr, f1 in videos:
                err = abs(f1_score(re, pr) - f1)
                worst = max(worst, err)
                assert err <= 0.1, name
            for i, got in enumerate(avg):
                err = abs(sum(v[i] for v in videos) / len(videos) - got)
                worst = max(worst, err)
                assert err <= 0.1, name
        report(6, f"5.0 px -> TP, 5.000001 px -> FP; all 10 table rows "
                  f"self-consistent (worst {worst:.3f} <= 0.1)")


# ---------------------------------------------------------------------------
# shared end-to-end setup (criteria 7, 8, 10)

E2E_CFG = dict(depth=2, channels=(8, 16), crop=128, epochs=14,
               steps_per_epoch=12, batch_size=6, lr=3e-3,
               decay_epochs=(10, 13), seed=1, score_thresh=0.15,
               frames_per_clip=20, min_track_len=30, min_velocity=0.55)


def make_e2e_video(seed, video_id):
    rng = np.random.default_rng(seed)
    speeds = []
    for _ in range(8):
        sx = rng.uniform(0.6, 1.3) * rng.choice([-1, 1])
        sy = rng.uniform(0.6, 1.3) * rng.choice([-1, 1])
        speeds.append((sx, sy))
    scfg = SynthConfig(size=(256, 256), frames=60, n_targets=8,
                       noise_sigma=4.0, target_intensity_delta=(40, 80),
                       speeds=speeds, n_clutter_blinks=20, seed=seed,
                       video_id=video_id)
    return synth_video(scfg)


@pytest.fixture(scope="module")
def e2e_videos():
    train = [make_e2e_video(100 + i, f"train{i}")[0] for i in range(2)]
    held, held_gt = make_e2e_video(999, "held")
    return train, held, held_gt


@pytest.fixture(scope="module")
def e2e_run(e2e_videos, tmp_path_factory):
    train_videos, held, held_gt = e2e_videos
    out = tmp_path_factory.mktemp("e2e_run1")
    cfg = RunConfig(**E2E_CFG, update_period=5)
    start = time.time()
    det, state, history = run_framework(train_videos, cfg, out_dir=out)
    elapsed = time.time() - start
    return {"cfg": cfg, "det": det, "state": state, "out": out,
            "elapsed": elapsed, "history": history}


class TestCriterion7SyntheticEndToEnd:
    def test_full_pipeline_f1(self, e2e_videos, e2e_run):
        train_videos, held, held_gt = e2e_videos
        cfg = e2e_run["cfg"]

        # gate: the brute-force traditional detector must reach F1 >= 0.8
        from svmod.evolution import _store_to_detections
        trad = make_initial_labels(held, cfg)
        trad_rep = score(_store_to_detections(trad, "held"), held_gt,
                         d_max=5.0)
        assert trad_rep.avg_f1 >= 80.0

        dets = infer_video(e2e_run["det"], held, cfg)
        rep = score(dets, held_gt, d_max=5.0)
        total_elapsed = e2e_run["elapsed"]
        assert rep.avg_f1 >= 90.0
        assert total_elapsed < 1800
        report(7, f"traditional F1 {trad_rep.avg_f1:.1f} (>= 80); trained "
                  f"F1 {rep.avg_f1:.1f} (>= 90, Re {rep.avg_recall:.1f} / "
                  f"Pr {rep.avg_precision:.1f}); training "
                  f"{total_elapsed:.0f}s (< 1800s)")


class TestCriterion8EvolutionBenefit:
    def test_recall_recovery(self, e2e_videos):
        train_videos, held, held_gt = e2e_videos
        cfg0 = RunConfig(**E2E_CFG, update_period=100)   # no evolution

        # round-0 labels, then delete whole targets covering >= 40% of rows
        initial = LabelStore()
        gt_by_vid = {}
        for i, v in enumerate(train_videos):
            _, gt = make_e2e_video(100 + i, v.video_id)
            gt_by_vid[v.video_id] = gt
            part = make_initial_labels(v, cfg0)
            for vid, b in part.iter_labels():
                initial.add(vid, b)

        rng = np.random.default_rng(7)
        removed_ids = {vid: set(rng.choice(8, size=4, replace=False).tolist())
                       for vid in gt_by_vid}
        degraded = LabelStore()
        for vid, b in initial.iter_labels():
            gt = gt_by_vid[vid]
            best, best_d = None, np.inf
            for g in gt.get(vid, b.frame):
                d = np.hypot(g.cx - b.cx, g.cy - b.cy)
                if d < best_d:
                    best, best_d = g, d
            if best is not None and best_d <= 5 \
                    and best.track_id in removed_ids[vid]:
                continue
            degraded.add(vid, b)
        removed_frac = 1 - len(degraded) / len(initial)
        assert removed_frac >= 0.40

        det_base, state_base, _ = run_framework(
            train_videos, cfg0, initial_labels=degraded.copy())
        rep_base = score(infer_video(det_base, held, cfg0), held_gt,
                         d_max=5.0)

        cfg_evo = RunConfig(**E2E_CFG, update_period=4)   # 3 rounds in 14
        det_evo, state_evo, _ = run_framework(
            train_videos, cfg_evo, initial_labels=degraded.copy())
        assert state_evo.round >= 2
        rep_evo = score(infer_video(det_evo, held, cfg_evo), held_gt,
                        d_max=5.0)

        gap = rep_evo.avg_recall - rep_base.avg_recall
        assert gap >= 10.0
        report(8, f"{removed_frac:.0%} of round-0 labels deleted; "
                  f"{state_evo.round} evolution rounds lift recall "
                  f"{rep_base.avg_recall:.1f} -> {rep_evo.avg_recall:.1f} "
                  f"(gap {gap:.1f} >= 10)")


# ---------------------------------------------------------------------------
# 9. efficiency: FLOP ratio and wall-clock speedup

class TestCriterion9Efficiency:
    def test_sparse_vs_dense(self):
        scfg = SynthConfig(size=(1024, 1024), frames=20, n_targets=60,
                           noise_sigma=4.0, target_intensity_delta=(30, 70),
                           n_clutter_blinks=400, seed=0, video_id="bench",
                           jitter_px=0.4, speckle_fraction=0.014)
        clip, _ = synth_video(scfg)
        cfg = RunConfig(depth=2, channels=(8, 16), seed=0)
        rep = bench(cfg, clip, runs=5)
        assert 0.008 <= rep.sampling_ratio <= 0.016   # the k=3 regime
        assert rep.flop_ratio <= 0.05
        assert rep.speedup is not None and rep.speedup >= 5.0
        report(9, f"occupancy {rep.sampling_ratio:.2%}; sparse/dense FLOPs "
                  f"{rep.flop_ratio:.3%} (<= 5%); wall-clock speedup "
                  f"{rep.speedup:.1f}x (>= 5x); sparse pipeline "
                  f"{rep.fps:.1f} FPS")


# ---------------------------------------------------------------------------
# 10. bit-identical reruns

class TestCriterion10Determinism:
    def test_rerun_bit_identical(self, e2e_videos, e2e_run,
                                 tmp_path_factory):
        train_videos, _, _ = e2e_videos
        out2 = tmp_path_factory.mktemp("e2e_run2")
        cfg = RunConfig(**E2E_CFG, update_period=5)
        run_framework(train_videos, cfg, out_dir=out2)

        out1 = e2e_run["out"]
        compared = []
        for name in ("ckpt_final.svck",
                     f"labels_round{e2e_run['state'].round}.csv",
                     "labels_round0.csv"):
            b1 = (out1 / name).read_bytes()
            b2 = (out2 / name).read_bytes()
            assert b1 == b2, name
            compared.append(name)
        report(10, f"re-run with seed {cfg.seed} produced bit-identical "
                   f"{', '.join(compared)}")
