"""Training loop over dataset shards with resumable checkpoints and a loss log."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .dataset import ShardReader, patch_from_sidecar
from .model import AdamState, NetConfig, PlannerNet, TrainBatch, load_checkpoint, save_checkpoint, train_step


def batch_from_shard(reader: ShardReader, indices, patch) -> TrainBatch:
    return TrainBatch(
        rasters=reader.column("raster", indices),
        gts=reader.column("gt_heatmap", indices),
        weights=reader.column("gt_weight", indices),
        patch=patch,
        trajs=reader.column("traj", indices),
        goal_rc=reader.column("goal_rc", indices).astype(np.int64),
        speeds=reader.column("speed", indices)[:, 0],
    )


def train(
    shard_path,
    net_cfg: NetConfig,
    cfg: TrainConfig,
    out_checkpoint,
    curve_path=None,
    resume=None,
) -> float:
    """Train for cfg.steps total steps (counting any resumed progress).

    Writes the checkpoint (with optimizer and data-order RNG state, so a
    resumed run reproduces the uninterrupted one exactly) and appends
    per-step losses to the curve CSV. Returns the final loss.
    """
    reader = ShardReader(shard_path)
    if reader.n == 0:
        raise ValueError(f"{shard_path}: dataset is empty")
    patch = patch_from_sidecar(reader.sidecar())

    rng = np.random.default_rng(cfg.seed)
    if resume is not None:
        net, adam, start_step, extra = load_checkpoint(resume)
        adam.lr = cfg.lr
        if "rng_state" in extra:
            rng.bit_generator.state = extra["rng_state"]
    else:
        net = PlannerNet(net_cfg, seed=cfg.seed)
        adam = AdamState.for_params(net.params, lr=cfg.lr)
        start_step = 0

    curve_rows = []
    loss = float("nan")
    for s in range(start_step, cfg.steps):
        idx = rng.integers(0, reader.n, size=cfg.batch_size)
        batch = batch_from_shard(reader, idx, patch)
        loss = train_step(
            batch,
            net,
            adam,
            traj_weight=cfg.traj_weight,
            heat_normalize=cfg.heat_normalize,
            step=s,
        )
        curve_rows.append((s, loss))
        if cfg.checkpoint_every and (s + 1) % cfg.checkpoint_every == 0:
            _save(out_checkpoint, net, adam, s + 1, rng)
            if curve_path is not None:
                _append_curve(curve_path, curve_rows)
                curve_rows = []

    _save(out_checkpoint, net, adam, cfg.steps, rng)
    if curve_path is not None:
        _append_curve(curve_path, curve_rows)
    return loss


def _save(path, net, adam, step, rng):
    state = rng.bit_generator.state
    save_checkpoint(path, net, adam, step, extra={"rng_state": state})


def _append_curve(path, rows):
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as f:
        w = csv.writer(f)
        if new:
            w.writerow(["step", "loss"])
        for s, l in rows:
            w.writerow([s, f"{l:.8f}"])
