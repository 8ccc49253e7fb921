"""One JSON run-config document covering every module, with full defaulting.

Unknown keys are rejected anywhere in the tree; command-line flags override
file values (handled by the CLI).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import get_type_hints

from .augment import PerturbConfig
from .dataset import DatasetConfig
from .errors import ConfigError
from .generate import GeneratorConfig
from .heatmap import GtConfig
from .model import NetConfig
from .raster import RasterConfig
from .sim import OodConfig, SimConfig


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 20000
    batch_size: int = 8
    lr: float = 1e-4
    traj_weight: float = 1.0
    heat_normalize: bool = False
    seed: int = 0
    log_every: int = 50
    checkpoint_every: int = 2000


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    raster: RasterConfig = field(default_factory=RasterConfig)
    gt: GtConfig = field(default_factory=GtConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    net: NetConfig = field(default_factory=NetConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    ood: OodConfig = field(default_factory=OodConfig)


def _build(dc_type, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    hints = get_type_hints(dc_type)
    names = {f.name for f in fields(dc_type)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        hint = hints.get(key)
        sub = f"{path}.{key}"
        if is_dataclass(hint) and isinstance(value, dict):
            kwargs[key] = _build(hint, value, sub)
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return dc_type(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus override dicts."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if overrides:
        data = _deep_merge(data, overrides)
    return _build(RunConfig, data, "config")


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


_ = PerturbConfig  # re-exported for config files documentation
