"""Training-sample construction and the binary shard format.

A shard is one `.bin` file (magic, u32 header length, JSON header, then
fixed-layout records of little-endian float32 tensors) plus a `.json`
sidecar carrying the record count, field shapes, channel names and the loss
patch. One record is one (scenario, frame) training sample: BEV raster,
ground-truth heatmap, hourglass weights, expert waypoints, goal pixel,
speed and turn category.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import PerturbConfig, balance_weights, perturb_trajectory, sample_orientation_noise
from .errors import ConfigError, LabelError, ScenarioFormatError
from .geometry import rot2d
from .heatmap import GtConfig, PatchRegion, build_gt_sample
from .raster import RasterConfig, channel_names, rasterize
from .scenario import Scenario, Trajectory, TurnCategory, classify_turn, wrap_angle

SHARD_MAGIC = b"HPSHARD1"
TURN_CODE = {TurnCategory.STRAIGHT: 0, TurnCategory.TURN_LEFT: 1, TurnCategory.TURN_RIGHT: 2}


@dataclass(frozen=True)
class DatasetConfig:
    n_samples: int = 2000
    frame_stride: int = 3
    horizon: int = 20
    balance: bool = True
    orientation_noise: bool = True
    turn_threshold: float = 0.4
    perturb: PerturbConfig = field(default_factory=PerturbConfig)
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 0 or self.frame_stride < 1 or self.horizon < 1:
            raise ConfigError("invalid dataset sizing")


class ShardWriter:
    def __init__(self, path, fields: list[tuple[str, tuple[int, ...]]]):
        self.path = Path(path)
        self.fields = fields
        header = json.dumps(
            {"format_version": 1, "dtype": "<f4", "fields": [{"name": n, "shape": list(s)} for n, s in fields]},
            sort_keys=True,
        ).encode()
        self._f = open(self.path, "wb")
        self._f.write(SHARD_MAGIC)
        self._f.write(len(header).to_bytes(4, "little"))
        self._f.write(header)
        self.count = 0

    def append(self, record: dict[str, np.ndarray]) -> None:
        for name, shape in self.fields:
            arr = np.ascontiguousarray(record[name], dtype="<f4")
            if arr.shape != shape:
                raise ConfigError(f"field {name}: shape {arr.shape} != declared {shape}")
            self._f.write(arr.tobytes())
        self.count += 1

    def close(self) -> int:
        self._f.close()
        return self.count


class ShardReader:
    """Memory-mapped reader; all fields are float32 views over one flat table."""

    def __init__(self, path):
        self.path = Path(path)
        with open(self.path, "rb") as f:
            magic = f.read(len(SHARD_MAGIC))
            if magic != SHARD_MAGIC:
                raise ScenarioFormatError(f"{path}: not a shard file")
            n = int.from_bytes(f.read(4), "little")
            header = json.loads(f.read(n).decode())
            self._data_start = len(SHARD_MAGIC) + 4 + n
        self.fields = [(d["name"], tuple(d["shape"])) for d in header["fields"]]
        self._sizes = {name: int(np.prod(shape)) for name, shape in self.fields}
        self.record_floats = sum(self._sizes.values())
        nbytes = self.path.stat().st_size - self._data_start
        if nbytes % (4 * self.record_floats):
            raise ScenarioFormatError(f"{path}: truncated shard (stray {nbytes} bytes)")
        self.n = nbytes // (4 * self.record_floats)
        flat = np.memmap(self.path, dtype="<f4", mode="r", offset=self._data_start)
        self._table = flat.reshape(self.n, self.record_floats) if self.n else flat.reshape(0, max(self.record_floats, 1))
        self._offsets = {}
        off = 0
        for name, shape in self.fields:
            self._offsets[name] = off
            off += self._sizes[name]

    def column(self, name: str, indices=None) -> np.ndarray:
        off = self._offsets[name]
        shape = dict(self.fields)[name]
        block = self._table[:, off : off + self._sizes[name]] if indices is None else self._table[
            np.asarray(indices), off : off + self._sizes[name]
        ]
        return np.asarray(block).reshape((-1, *shape))

    @property
    def sidecar_path(self) -> Path:
        return self.path.with_suffix(".json")

    def sidecar(self) -> dict:
        return json.loads(self.sidecar_path.read_text())


def expert_segment(s: Scenario, frame: int, horizon: int) -> Trajectory:
    return Trajectory([s.ego.pose(frame + k) for k in range(horizon + 1)])


def waypoint_labels(traj: Trajectory, extra_rotation: float) -> np.ndarray:
    """Future poses relative to the start pose, expressed in the render frame
    (x along the rendered heading, y to its left)."""
    p0 = traj.poses[0]
    rel = rot2d(-(p0.yaw + extra_rotation))
    out = np.empty((len(traj) - 1, 3))
    for k, p in enumerate(traj.poses[1:]):
        v = rel @ np.array([p.x - p0.x, p.y - p0.y])
        out[k] = (v[0], v[1], wrap_angle(p.yaw - p0.yaw - extra_rotation))
    return out


def build_record(
    s: Scenario,
    frame: int,
    raster_cfg: RasterConfig,
    gt_cfg: GtConfig,
    ds_cfg: DatasetConfig,
    rng: np.random.Generator,
) -> dict[str, np.ndarray]:
    """One training record; raises LabelError when the goal leaves the grid
    or the road."""
    rot = sample_orientation_noise(rng) if ds_cfg.orientation_noise else 0.0
    segment = expert_segment(s, frame, ds_cfg.horizon)
    segment = perturb_trajectory(segment, ds_cfg.perturb, rng)
    current = segment.poses[0]
    nh = raster_cfg.n_history
    history = [current] + [s.ego.pose(frame - k) for k in range(1, nh + 1)]
    heat, weights, patch, goal, tf = build_gt_sample(
        s, frame, gt_cfg, raster_cfg, extra_rotation=rot, ego_current=current, horizon=ds_cfg.horizon
    )
    raster = rasterize(s, frame, raster_cfg, rot, ego_history=history)
    turn = classify_turn(segment, ds_cfg.turn_threshold)
    return {
        "raster": raster.channels,
        "gt_heatmap": heat.astype(np.float32),
        "gt_weight": weights.astype(np.float32),
        "traj": waypoint_labels(segment, rot).astype(np.float32),
        "goal_rc": np.array([goal.row, goal.col], dtype=np.float32),
        "speed": np.array([s.ego.speed(frame)], dtype=np.float32),
        "turn_cat": np.array([TURN_CODE[turn]], dtype=np.float32),
    }


def shard_fields(raster_cfg: RasterConfig, horizon: int) -> list[tuple[str, tuple[int, ...]]]:
    h, w = raster_cfg.height, raster_cfg.width
    return [
        ("raster", (raster_cfg.n_channels, h, w)),
        ("gt_heatmap", (h, w)),
        ("gt_weight", (h, w)),
        ("traj", (horizon, 3)),
        ("goal_rc", (2,)),
        ("speed", (1,)),
        ("turn_cat", (1,)),
    ]


def build_dataset(
    scenarios: list[Scenario],
    out_path,
    raster_cfg: RasterConfig,
    gt_cfg: GtConfig,
    ds_cfg: DatasetConfig,
) -> dict:
    """Assemble a balanced, augmented shard; returns the sidecar document."""
    rng = np.random.default_rng(ds_cfg.seed)
    candidates: list[tuple[int, int, TurnCategory]] = []
    for si, s in enumerate(scenarios):
        last = s.n_frames - ds_cfg.horizon - 1
        for frame in range(raster_cfg.n_history, last + 1, ds_cfg.frame_stride):
            turn = classify_turn(expert_segment(s, frame, ds_cfg.horizon), ds_cfg.turn_threshold)
            candidates.append((si, frame, turn))

    counts = {cat: sum(1 for c in candidates if c[2] is cat) for cat in TurnCategory}
    balanced = ds_cfg.balance and all(counts[cat] > 0 for cat in TurnCategory)
    if balanced:
        # per-sample weights: a draw lands in each turn category equally often
        sw = balance_weights(counts)
        probs = np.array([sw.weight(c[2]) for c in candidates])
        probs /= probs.sum()
    else:
        probs = np.full(len(candidates), 1.0 / max(len(candidates), 1))

    writer = ShardWriter(out_path, shard_fields(raster_cfg, ds_cfg.horizon))
    patch = PatchRegion.centered(raster_cfg.height, raster_cfg.width, gt_cfg.patch_fraction)
    written = {cat: 0 for cat in TurnCategory}
    skipped = 0
    attempts = 0
    max_attempts = ds_cfg.n_samples * 5 + 100
    while writer.count < ds_cfg.n_samples and candidates and attempts < max_attempts:
        attempts += 1
        si, frame, turn = candidates[int(rng.choice(len(candidates), p=probs))]
        try:
            record = build_record(scenarios[si], frame, raster_cfg, gt_cfg, ds_cfg, rng)
        except LabelError:
            skipped += 1
            continue
        writer.append(record)
        written[turn] += 1
    n = writer.close()

    sidecar = {
        "format_version": 1,
        "record_count": n,
        "fields": [{"name": name, "shape": list(shape)} for name, shape in writer.fields],
        "channel_names": channel_names(raster_cfg.n_history),
        "patch": [patch.row0, patch.col0, patch.row1, patch.col1],
        "raster": {
            "height": raster_cfg.height,
            "width": raster_cfg.width,
            "resolution": raster_cfg.resolution,
            "n_history": raster_cfg.n_history,
        },
        "category_counts": {cat.value: written[cat] for cat in TurnCategory},
        "corpus_counts": {cat.value: counts[cat] for cat in TurnCategory},
        "balanced": balanced,
        "skipped_offroad_goals": skipped,
    }
    Path(out_path).with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return sidecar


def patch_from_sidecar(sidecar: dict) -> PatchRegion:
    r0, c0, r1, c1 = sidecar["patch"]
    return PatchRegion(r0, c0, r1, c1)
