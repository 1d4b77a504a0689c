"""Command-line entry point wiring the pipeline into reproducible runs.

Subcommands map 1:1 onto the orchestrating operations: synth,
pseudo-label, train, evolve, infer, track, eval, bench. Configuration
comes from an optional flat JSON file with flag overrides (flags win);
every run writes a manifest (config + seed + version) into --out.

Heavy imports are deferred so --threads can cap the BLAS pools before
numpy loads; --threads 1 makes runs bit-for-bit reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

_THREAD_ENV_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def _apply_threads(argv):
    threads = 0
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            try:
                threads = int(argv[i + 1])
            except ValueError:
                pass
        elif arg.startswith("--threads="):
            try:
                threads = int(arg.split("=", 1)[1])
            except ValueError:
                pass
    if threads > 0:
        for var in _THREAD_ENV_VARS:
            os.environ[var] = str(threads)


def _add_config_flags(parser):
    """One optional flag per RunConfig tunable; unset flags keep file/default."""
    g = parser.add_argument_group("config overrides")
    g.add_argument("--config", help="flat JSON config file")
    g.add_argument("--k", type=float, help="threshold multiplier (default 3)")
    g.add_argument("--frames-per-clip", type=int, dest="frames_per_clip",
                   help="clip length T (default 20)")
    g.add_argument("--depth", type=int, help="U-Net levels, 2-4 (default 3)")
    g.add_argument("--channels", help="comma list of level widths")
    g.add_argument("--lambda-size", type=float, dest="lambda_size",
                   help="size-loss weight (default 0.1)")
    g.add_argument("--lambda-offset", type=float, dest="lambda_offset",
                   help="offset-loss weight (default 1.0)")
    g.add_argument("--batch-size", type=int, dest="batch_size",
                   help="clips per step (default 6)")
    g.add_argument("--crop", type=int, help="train crop size (default 256)")
    g.add_argument("--lr", type=float, help="learning rate (default 1.25e-4)")
    g.add_argument("--epochs", type=int, help="train epochs (default 55)")
    g.add_argument("--decay-epochs", dest="decay_epochs",
                   help="comma list of decay epochs (default 30,45)")
    g.add_argument("--decay-factor", type=float, dest="decay_factor",
                   help="lr decay factor (default 0.1)")
    g.add_argument("--sample-fraction", type=float, dest="sample_fraction",
                   help="fraction of train clips per epoch (default 0.2)")
    g.add_argument("--steps-per-epoch", type=int, dest="steps_per_epoch",
                   help="fixed steps per epoch (default: dataset-derived)")
    g.add_argument("--score-thresh", type=float, dest="score_thresh",
                   help="decode score threshold (default 0.3)")
    g.add_argument("--max-per-frame", type=int, dest="max_per_frame",
                   help="max detections per frame (default 500)")
    g.add_argument("--gate", type=float, help="association gate px (default 10)")
    g.add_argument("--max-age", type=int, dest="max_age",
                   help="misses before a track ends (default 3)")
    g.add_argument("--min-track-len", type=int, dest="min_track_len",
                   help="trajectory length filter (default 30)")
    g.add_argument("--min-velocity", type=float, dest="min_velocity",
                   help="mean velocity filter px/frame (default 0.55)")
    g.add_argument("--update-period", type=int, dest="update_period",
                   help="epochs between label updates (default 10)")
    g.add_argument("--merge-radius", type=float, dest="merge_radius",
                   help="label merge dedup radius px (default 5)")
    g.add_argument("--d-max", type=float, dest="d_max",
                   help="evaluation distance threshold px (default 5)")
    g.add_argument("--seed", type=int, help="run seed (default 0)")
    g.add_argument("--threads", type=int,
                   help="worker threads; 1 guarantees determinism "
                        "(default: all cores)")


_CONFIG_KEYS = (
    "k", "frames_per_clip", "depth", "channels", "lambda_size",
    "lambda_offset", "batch_size", "crop", "lr", "epochs", "decay_epochs",
    "decay_factor", "sample_fraction", "steps_per_epoch", "score_thresh",
    "max_per_frame", "gate", "max_age", "min_track_len", "min_velocity",
    "update_period", "merge_radius", "d_max", "seed", "threads",
)


def _build_config(args):
    from .config import RunConfig

    values = {}
    if args.config:
        values = RunConfig.load(args.config).to_dict()
    for key in _CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is None:
            continue
        if key in ("channels", "decay_epochs") and isinstance(v, str):
            v = tuple(int(x) for x in v.split(",") if x)
        values[key] = v
    channels = values.get("channels")
    if channels:
        if getattr(args, "depth", None) is None:
            values["depth"] = len(channels)   # widths imply the depth
        elif len(channels) != values["depth"]:
            values["channels"] = None         # explicit depth wins
    return RunConfig.from_dict(values)


def _write_manifest(out_dir, command, cfg):
    from . import __version__

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "version": __version__,
                "seed": cfg.seed, "config": cfg.to_dict()}
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_videos(data_dir, video_arg=None):
    """Frame dirs under data_dir (or a single frame dir) as FrameClips."""
    from .data import load_clip, n_frames_on_disk

    data_dir = Path(data_dir)
    if video_arg:
        dirs = [data_dir / v for v in video_arg.split(",")]
    else:
        candidates = sorted(p for p in data_dir.iterdir() if p.is_dir())
        dirs = candidates if candidates else [data_dir]
    videos = []
    for d in dirs:
        n = n_frames_on_disk(d)
        videos.append(load_clip(d, 0, n))
    return videos


# ---------------------------------------------------------------------------
# Subcommands

def _cmd_synth(args):
    from .data import SynthConfig, save_clip, save_labels, synth_video

    cfg = _build_config(args)
    out = Path(args.out)
    scfg = SynthConfig(size=(args.size, args.size), frames=args.frames,
                       n_targets=args.targets, noise_sigma=args.noise,
                       n_clutter_blinks=args.blinks, seed=cfg.seed,
                       video_id=args.video_id)
    clip, labels = synth_video(scfg)
    save_clip(clip, out / args.video_id)
    save_labels(labels, out / f"{args.video_id}_gt.csv")
    _write_manifest(out, "synth", cfg)
    print(f"wrote {clip.frames.shape[0]} frames to {out / args.video_id}")
    return 0


def _cmd_pseudo_label(args):
    from .data import LabelStore, save_labels
    from .evolution import make_initial_labels

    cfg = _build_config(args)
    videos = _load_videos(args.data, args.videos)
    store = LabelStore()
    for video in videos:
        part = make_initial_labels(video, cfg)
        for vid, b in part.iter_labels():
            store.add(vid, b)
        if args.debug_dump:
            _dump_debug_stages(video, cfg, Path(args.debug_dump))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_labels(store, out / "labels_round0.csv")
    _write_manifest(out, "pseudo-label", cfg)
    print(f"wrote {len(store)} labels to {out / 'labels_round0.csv'}")
    return 0


def _dump_debug_stages(video, cfg, dump_dir):
    """Background/|residual| PGMs plus the sampled point-cloud CSV."""
    import warnings

    import numpy as np

    from .background import subtract_background
    from .data import FrameClip, save_clip
    from .errors import EmptyCloudWarning
    from .sampling import ThresholdParams, dump_points_csv, sample_points

    dump_dir = dump_dir / video.video_id
    dump_dir.mkdir(parents=True, exist_ok=True)
    n = video.frames.shape[0]
    t_clip = min(cfg.frames_per_clip, n)
    for start in range(0, max(n - t_clip + 1, 1), t_clip):
        clip = video.window(start, t_clip)
        res = subtract_background(clip)
        bg = np.clip(res.background, 0, 255)
        save_clip(FrameClip(np.stack([bg, bg]), video.video_id, 0),
                  dump_dir / f"background_{start:06d}")
        absres = np.clip(np.abs(res.residuals), 0, 255)
        save_clip(FrameClip(absres, video.video_id, start),
                  dump_dir / "residual_abs")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyCloudWarning)
            cloud = sample_points(res, ThresholdParams(cfg.k))
        dump_points_csv(cloud, dump_dir / f"points_{start:06d}.csv")


def _cmd_train(args):
    from .data import load_labels
    from .detector import train

    cfg = _build_config(args)
    videos = _load_videos(args.data, args.videos)
    labels = load_labels(args.labels)
    out = Path(args.out)
    _write_manifest(out, "train", cfg)
    det, history = train(videos, labels, cfg, out_dir=out)
    print(f"trained {cfg.epochs} epochs; final loss "
          f"{history[-1] if history else float('nan'):.4f}")
    return 0


def _cmd_evolve(args):
    from .data import load_labels
    from .evolution import run_framework

    cfg = _build_config(args)
    videos = _load_videos(args.data, args.videos)
    initial = load_labels(args.labels) if args.labels else None
    out = Path(args.out)
    _write_manifest(out, "evolve", cfg)
    det, state, history = run_framework(videos, cfg, initial_labels=initial,
                                        out_dir=out)
    counts = state.label_counts()
    print(f"finished round {state.round}: {counts['total']} labels "
          f"({counts['initial']} initial, {counts['evolved']} evolved)")
    return 0


def _cmd_infer(args):
    from .detector import Detector, infer_video, save_detections

    cfg = _build_config(args)
    det = Detector.load(args.checkpoint)
    videos = _load_videos(args.data, args.videos)
    det_sets = [infer_video(det, video, cfg) for video in videos]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_detections(det_sets, out / "detections.csv")
    _write_manifest(out, "infer", cfg)
    print(f"wrote {sum(len(d) for d in det_sets)} detections to "
          f"{out / 'detections.csv'}")
    return 0


def _cmd_track(args):
    from .detector import load_detections
    from .tracker import TrackerConfig, dump_tracks_csv, filter_tracks, track_video

    cfg = _build_config(args)
    det_sets = load_detections(args.detections)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    total = 0
    for ds in det_sets:
        tracks = track_video(ds, TrackerConfig.from_run(cfg))
        if args.filter:
            tracks = filter_tracks(tracks, cfg.min_track_len,
                                   cfg.min_velocity)
        dump_tracks_csv(tracks, out / f"tracks_{ds.video_id}.csv")
        total += len(tracks)
    _write_manifest(out, "track", cfg)
    print(f"wrote {total} tracks to {out}")
    return 0


def _cmd_eval(args):
    from .data import load_labels
    from .detector import load_detections
    from .evaluation import score

    cfg = _build_config(args)
    det_sets = load_detections(args.dets)
    labels = load_labels(args.labels)
    report = score(det_sets, labels, d_max=cfg.d_max)
    print(report.table())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_json(out / "eval.json")
    _write_manifest(out, "eval", cfg)
    if args.dump_overlays:
        from .evaluation import dump_overlays
        if not args.data:
            raise SystemExit("error: --dump-overlays needs --data to "
                             "load the frames")
        videos = _load_videos(args.data, args.videos)
        by_id = {d.video_id: d for d in det_sets}
        for video in videos:
            if video.video_id in by_id:
                dump_overlays(by_id[video.video_id], labels, video,
                              out / f"overlays_{video.video_id}",
                              d_max=cfg.d_max)
    return 0


def _cmd_bench(args):
    from .data import SynthConfig, synth_video
    from .evaluation import bench

    cfg = _build_config(args)
    if args.data:
        clip = _load_videos(args.data, args.videos)[0]
    else:
        scfg = SynthConfig(size=(args.size, args.size), frames=args.frames,
                           n_targets=args.targets, noise_sigma=args.noise,
                           seed=cfg.seed, video_id="bench")
        clip, _ = synth_video(scfg)
    report = bench(cfg, clip, runs=args.runs,
                   dense_wallclock=not args.no_dense)
    print(report.to_json())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_json(out / "bench.json")
    _write_manifest(out, "bench", cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svmod",
        description="Sparse moving-vehicle detection for satellite video")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic video + labels")
    p.add_argument("--out", required=True)
    p.add_argument("--video-id", default="synth000")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--targets", type=int, default=8)
    p.add_argument("--noise", type=float, default=4.0)
    p.add_argument("--blinks", type=int, default=20)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pseudo-label",
                       help="initial labels via the traditional detector")
    p.add_argument("--data", required=True, help="directory of frame dirs")
    p.add_argument("--videos", help="comma list of video ids (default: all)")
    p.add_argument("--out", required=True)
    p.add_argument("--debug-dump", dest="debug_dump",
                   help="write background/|residual| PGMs and point CSVs here")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_pseudo_label)

    p = sub.add_parser("train", help="train on a fixed label store")
    p.add_argument("--data", required=True)
    p.add_argument("--videos")
    p.add_argument("--labels", required=True, help="label CSV")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evolve",
                       help="full unsupervised loop with label evolution")
    p.add_argument("--data", required=True)
    p.add_argument("--videos")
    p.add_argument("--labels", help="optional round-0 label CSV")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_evolve)

    p = sub.add_parser("infer", help="decode detections over a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--videos")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("track", help="SORT tracks from a detection CSV")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--filter", action="store_true",
                   help="apply length/velocity filters")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("eval", help="score detections against labels")
    p.add_argument("--dets", required=True, help="detection CSV")
    p.add_argument("--labels", required=True, help="label CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-overlays", action="store_true",
                   help="write TP/FP/FN overlay PNGs (yellow/red/green)")
    p.add_argument("--data", help="frame dirs (needed for overlays)")
    p.add_argument("--videos")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="FPS + sparse/dense FLOP comparison")
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="frame dirs (default: synthetic clip)")
    p.add_argument("--videos")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--targets", type=int, default=16)
    p.add_argument("--noise", type=float, default=4.0)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--no-dense", action="store_true",
                   help="skip the dense wall-clock reference")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    _apply_threads(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:   # diagnostics to stderr, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
