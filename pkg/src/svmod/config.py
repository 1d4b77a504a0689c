"""Flat run configuration: every pipeline tunable in one validated record.

Values default to the reference operating point (20-frame clips, batch 6,
crop 256, Adam at 1.25e-4 over 55 epochs with x0.1 decay at 30/45, k = 3,
label updates every 10 epochs, track filters at length 30 / 0.55 px/frame,
5 px evaluation distance). Configs round-trip through flat JSON; unknown
keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .errors import InvalidConfig


@dataclass
class RunConfig:
    # sampling
    k: float = 3.0
    frames_per_clip: int = 20
    # network
    depth: int = 3
    channels: tuple | None = None        # default widths per depth
    # loss
    lambda_size: float = 0.1
    lambda_offset: float = 1.0
    # training
    batch_size: int = 6
    crop: int = 256
    lr: float = 1.25e-4
    epochs: int = 55
    decay_epochs: tuple = (30, 45)
    decay_factor: float = 0.1
    sample_fraction: float = 0.2
    steps_per_epoch: int | None = None
    # decoding
    score_thresh: float = 0.3
    max_per_frame: int = 500
    # tracker
    gate: float = 10.0
    max_age: int = 3
    process_noise: float = 0.01
    measurement_noise: float = 1.0
    # trajectory filters
    min_track_len: int = 30
    min_velocity: float = 0.55
    # label evolution
    update_period: int = 10
    merge_radius: float = 5.0
    evolve_score_thresh: float = 0.05   # permissive; SORT filters false alarms
    # evaluation
    d_max: float = 5.0
    # misc
    seed: int = 0
    threads: int = 0                     # 0 = all available cores
    # paths
    data_dir: str | None = None
    labels: str | None = None
    out_dir: str | None = None
    checkpoint: str | None = None
    detections: str | None = None

    DEFAULT_WIDTHS = (16, 32, 64, 128)

    def __post_init__(self):
        if self.channels is not None:
            self.channels = tuple(int(c) for c in self.channels)
        if self.decay_epochs is not None:
            self.decay_epochs = tuple(int(e) for e in self.decay_epochs)
        self.validate()

    def validate(self):
        checks = [
            (self.k >= 0, "k must be >= 0"),
            (self.frames_per_clip >= 2, "frames_per_clip must be >= 2"),
            (self.depth in (2, 3, 4), "depth must be one of 2, 3, 4"),
            (self.lambda_size >= 0, "lambda_size must be >= 0"),
            (self.lambda_offset >= 0, "lambda_offset must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.crop >= 8, "crop must be >= 8"),
            (self.lr > 0, "lr must be > 0"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (0 < self.decay_factor <= 1, "decay_factor must be in (0, 1]"),
            (0 < self.sample_fraction <= 1, "sample_fraction must be in (0, 1]"),
            (self.score_thresh >= 0, "score_thresh must be >= 0"),
            (self.max_per_frame >= 1, "max_per_frame must be >= 1"),
            (self.gate > 0, "gate must be > 0"),
            (self.max_age >= 1, "max_age must be >= 1"),
            (self.process_noise > 0, "process_noise must be > 0"),
            (self.measurement_noise > 0, "measurement_noise must be > 0"),
            (self.min_track_len >= 1, "min_track_len must be >= 1"),
            (self.min_velocity >= 0, "min_velocity must be >= 0"),
            (self.update_period >= 1, "update_period must be >= 1"),
            (self.merge_radius >= 0, "merge_radius must be >= 0"),
            (self.evolve_score_thresh >= 0,
             "evolve_score_thresh must be >= 0"),
            (self.d_max > 0, "d_max must be > 0"),
            (self.threads >= 0, "threads must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidConfig(msg)
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise InvalidConfig("steps_per_epoch must be >= 1 when set")
        if self.channels is not None and len(self.channels) != self.depth:
            raise InvalidConfig(
                f"channels {self.channels} must list one width per level "
                f"(depth {self.depth})")

    def net_channels(self) -> tuple:
        if self.channels is not None:
            return self.channels
        return self.DEFAULT_WIDTHS[:self.depth]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channels"] = list(self.net_channels())
        d["decay_epochs"] = list(self.decay_epochs)
        return d

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as f:
            values = json.load(f)
        if not isinstance(values, dict):
            raise InvalidConfig("config file must hold a flat JSON object")
        return cls.from_dict(values)


def seeded_rng(seed: int, stream: str):
    """Named sub-stream generator so component draws stay independent."""
    import numpy as np
    streams = {"init": 1, "data": 2, "crops": 3, "synth": 4, "bench": 5}
    if stream not in streams:
        raise KeyError(f"unknown rng stream {stream!r}")
    return np.random.default_rng([int(seed), streams[stream]])
