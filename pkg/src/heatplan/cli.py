"""Command-line pipeline: gen, dataset, train, eval, viz, bench, report.

Exit codes: 0 success, 2 I/O or input-file problems, 3 numeric divergence
during training, 4 shape/config mismatches.
"""

from __future__ import annotations

import argparse
import functools
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, load_run_config
from .dataset import ShardReader, build_dataset, patch_from_sidecar
from .errors import ConfigError, DimensionError, DivergenceError, ScenarioFormatError
from .generate import generate_scenario
from .heatmap import build_gt_sample
from .model import NetConfig, PlannerNet, load_checkpoint
from .raster import rasterize, render_overlay
from .scenario import Category, Scenario, load_scenario, save_scenario
from .sim import (
    OodConfig,
    evaluate_suite,
    format_summary,
    make_model_planner,
    make_ood_suite,
    make_oracle_planner,
)
from .train import train

CATEGORY_FLAGS = {
    "lane_following": Category.LANE_FOLLOWING,
    "lane_changing": Category.LANE_CHANGING,
    "intersection": Category.INTERSECTION,
    "flexibility": Category.FLEXIBILITY,
}


def cmd_gen(args) -> int:
    cfg = load_run_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    counts = {}
    for flag, cat in CATEGORY_FLAGS.items():
        n = getattr(args, flag)
        counts[cat] = args.per_category if n is None else n
    entries = []
    for cat, n in counts.items():
        for i in range(n):
            seed = args.seed + i
            s = generate_scenario(cat, seed, cfg.generator)
            name = f"{cat.value}_{seed:06d}.json"
            save_scenario(s, out / name)
            entries.append({"file": name, "category": cat.value, "seed": seed})
    manifest = {
        "format_version": 1,
        "count": len(entries),
        "per_category": {cat.value: n for cat, n in counts.items()},
        "scenarios": entries,
    }
    (out / "index.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    print(f"wrote {len(entries)} scenarios to {out}")
    return 0


def _load_scenarios(directory) -> list[Scenario]:
    directory = Path(directory)
    files = sorted(directory.glob("*.json"))
    files = [f for f in files if f.name != "index.json"]
    return [load_scenario(f) for f in files]


def cmd_dataset(args) -> int:
    cfg = load_run_config(args.config)
    ds_cfg = cfg.dataset
    if args.seed is not None:
        from dataclasses import replace

        ds_cfg = replace(ds_cfg, seed=args.seed)
    if args.samples is not None:
        from dataclasses import replace

        ds_cfg = replace(ds_cfg, n_samples=args.samples)
    scenarios = _load_scenarios(args.scenarios)
    if not scenarios:
        print("warning: no scenarios found, writing an empty shard")
        from dataclasses import replace

        ds_cfg = replace(ds_cfg, n_samples=0)
    sidecar = build_dataset(scenarios, args.out, cfg.raster, cfg.gt, ds_cfg)
    print(
        f"wrote {sidecar['record_count']} records to {args.out} "
        f"(skipped {sidecar['skipped_offroad_goals']} off-road goals)"
    )
    print("per-category counts:", sidecar["category_counts"])
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    tcfg = cfg.train
    from dataclasses import replace

    if args.steps is not None:
        tcfg = replace(tcfg, steps=args.steps)
    if args.lr is not None:
        tcfg = replace(tcfg, lr=args.lr)
    if args.seed is not None:
        tcfg = replace(tcfg, seed=args.seed)
    net_cfg = _net_config_for(cfg)
    loss = train(
        args.dataset,
        net_cfg,
        tcfg,
        args.out,
        curve_path=args.curve,
        resume=args.resume,
    )
    print(f"final loss {loss:.6f}; checkpoint at {args.out}")
    return 0


def _net_config_for(cfg: RunConfig) -> NetConfig:
    from dataclasses import replace

    return replace(cfg.net, in_channels=cfg.raster.n_channels)


def _model_planner_factory(s, net, raster_cfg, gt_cfg):
    return make_model_planner(net, raster_cfg, gt_cfg)


def cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    scenarios = _load_scenarios(args.scenarios)
    if not scenarios:
        print("error: no scenarios found", file=sys.stderr)
        return 2
    if args.ood:
        scenarios = make_ood_suite(scenarios, cfg.ood, cfg.raster)
    if args.oracle:
        factory = functools.partial(make_oracle_planner, gt_cfg=cfg.gt, raster_cfg=cfg.raster)
    else:
        if not args.checkpoint:
            print("error: provide --checkpoint or --oracle", file=sys.stderr)
            return 2
        net, _, _, _ = load_checkpoint(args.checkpoint)
        if net.config.in_channels != cfg.raster.n_channels:
            raise DimensionError(
                f"checkpoint expects {net.config.in_channels} input channels, raster config produces {cfg.raster.n_channels}"
            )
        factory = functools.partial(
            _model_planner_factory, net=net, raster_cfg=cfg.raster, gt_cfg=cfg.gt
        )
    report = evaluate_suite(scenarios, factory, cfg.raster, cfg.sim, workers=args.workers)
    Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True))
    print(format_summary(report))
    return 0


def cmd_viz(args) -> int:
    cfg = load_run_config(args.config)
    s = load_scenario(args.scenario)
    frame = args.frame
    raster = rasterize(s, frame, cfg.raster)
    if args.checkpoint:
        net, _, _, _ = load_checkpoint(args.checkpoint)
        heat, _, _ = net.forward(raster.channels[None])
        heatmap = heat[0]
    else:
        heatmap, _, _, _, _ = build_gt_sample(s, frame, cfg.gt, cfg.raster)
    render_overlay(heatmap, raster, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_bench(args) -> int:
    cfg = load_run_config(args.config)
    s = generate_scenario(Category.LANE_FOLLOWING, args.seed, cfg.generator)
    frames = list(range(cfg.raster.n_history, s.n_frames - 1))
    raster_times = []
    rasters = []
    n = max(args.frames, 1)
    for i in range(n):
        frame = frames[i % len(frames)]
        t0 = time.perf_counter()
        r = rasterize(s, frame, cfg.raster)
        raster_times.append((time.perf_counter() - t0) * 1e3)
        if len(rasters) < 8:
            rasters.append(r.channels)
    net = PlannerNet(_net_config_for(cfg), seed=args.seed)
    infer_times = []
    for i in range(n):
        x = rasters[i % len(rasters)][None]
        t0 = time.perf_counter()
        net.forward(x)
        infer_times.append((time.perf_counter() - t0) * 1e3)
    result = {
        "frames": n,
        "raster_ms_median": statistics.median(raster_times),
        "inference_ms_median": statistics.median(infer_times),
        "raster_size": [cfg.raster.height, cfg.raster.width],
        "n_parameters": net.n_parameters(),
    }
    print(
        f"rasterization: median {result['raster_ms_median']:.3f} ms/frame over {n} frames\n"
        f"model inference: median {result['inference_ms_median']:.3f} ms/frame"
        f" ({result['n_parameters']} parameters)"
    )
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    report = json.loads(Path(args.report).read_text())
    print(format_summary(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatplan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate scenario files")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--per-category", type=int, default=10)
    for flag in CATEGORY_FLAGS:
        g.add_argument(f"--{flag.replace('_', '-')}", type=int, default=None)
    g.add_argument("--config", default=None)
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("dataset", help="build a training shard from scenarios")
    d.add_argument("--scenarios", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--samples", type=int, default=None)
    d.add_argument("--seed", type=int, default=None)
    d.add_argument("--config", default=None)
    d.set_defaults(func=cmd_dataset)

    t = sub.add_parser("train", help="train the planner")
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--curve", default=None)
    t.add_argument("--resume", default=None)
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--config", default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="closed-loop evaluation")
    e.add_argument("--scenarios", required=True)
    e.add_argument("--checkpoint", default=None)
    e.add_argument("--oracle", action="store_true")
    e.add_argument("--ood", action="store_true")
    e.add_argument("--report", required=True)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--config", default=None)
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("viz", help="heatmap overlay image")
    v.add_argument("--scenario", required=True)
    v.add_argument("--frame", type=int, required=True)
    v.add_argument("--checkpoint", default=None)
    v.add_argument("--out", required=True)
    v.add_argument("--config", default=None)
    v.set_defaults(func=cmd_viz)

    b = sub.add_parser("bench", help="rasterization / inference timing")
    b.add_argument("--frames", type=int, default=1000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default=None)
    b.add_argument("--config", default=None)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="re-print an evaluation report")
    r.add_argument("--report", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (OSError, ScenarioFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
