"""Training-data augmentation: category rebalancing, rendering-orientation
noise and start-pose trajectory perturbation with fixed-endpoint
re-interpolation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .scenario import Pose, Trajectory, TurnCategory

ORIENTATION_NOISE_HALF_RANGE = math.pi / 6.0


@dataclass(frozen=True)
class SamplerWeights:
    straight: float
    turn_left: float
    turn_right: float

    def __post_init__(self):
        w = (self.straight, self.turn_left, self.turn_right)
        if any(x <= 0 for x in w):
            raise ConfigError("sampler weights must be positive")
        if abs(sum(w) - 1.0) > 1e-12:
            raise ConfigError("sampler weights must sum to 1")

    def weight(self, cat: TurnCategory) -> float:
        return {
            TurnCategory.STRAIGHT: self.straight,
            TurnCategory.TURN_LEFT: self.turn_left,
            TurnCategory.TURN_RIGHT: self.turn_right,
        }[cat]


def balance_weights(counts: dict[TurnCategory, int]) -> SamplerWeights:
    """Inverse-frequency category weights (expected post-sampling ratio 1:1:1)."""
    for cat in TurnCategory:
        if counts.get(cat, 0) <= 0:
            raise ConfigError(f"degenerate corpus: no samples in category {cat.value}")
    inv = {cat: 1.0 / counts[cat] for cat in TurnCategory}
    total = sum(inv.values())
    return SamplerWeights(
        straight=inv[TurnCategory.STRAIGHT] / total,
        turn_left=inv[TurnCategory.TURN_LEFT] / total,
        turn_right=inv[TurnCategory.TURN_RIGHT] / total,
    )


def sample_orientation_noise(
    rng: np.random.Generator, half_range: float = ORIENTATION_NOISE_HALF_RANGE
) -> float:
    """Uniform draw from the open interval (-half_range, +half_range)."""
    while True:
        u = float(rng.uniform(-half_range, half_range))
        if -half_range < u < half_range:
            return u


@dataclass(frozen=True)
class PerturbConfig:
    probability: float = 0.1
    max_pos: float = 1.0  # per-axis start offset bound, meters
    max_yaw: float = 0.2  # start yaw offset bound, radians

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0):
            raise ConfigError("perturbation probability must lie in [0, 1]")


def perturb_trajectory(
    traj: Trajectory, cfg: PerturbConfig, rng: np.random.Generator
) -> Trajectory:
    """With probability cfg.probability, offset the start pose and re-blend.

    The final pose is preserved exactly; intermediate poses follow a cubic
    Hermite blend from the perturbed start to the fixed end, yaw taken from
    the path tangent. Pose count and dt are unchanged.
    """
    if len(traj) < 3:
        raise ValueError("perturbation requires at least 3 poses")
    if rng.random() >= cfg.probability:
        return traj

    start, end = traj.poses[0], traj.poses[-1]
    dx, dy = rng.uniform(-cfg.max_pos, cfg.max_pos, size=2)
    dyaw = float(rng.uniform(-cfg.max_yaw, cfg.max_yaw))
    p0 = Pose(start.x + dx, start.y + dy, start.yaw + dyaw)

    chord = math.dist((p0.x, p0.y), (end.x, end.y))
    m0 = chord * np.array([math.cos(p0.yaw), math.sin(p0.yaw)])
    m1 = chord * np.array([math.cos(end.yaw), math.sin(end.yaw)])
    a = np.array([p0.x, p0.y])
    b = np.array([end.x, end.y])

    n = len(traj)
    t = np.linspace(0.0, 1.0, n)
    h00 = 2 * t**3 - 3 * t**2 + 1
    h10 = t**3 - 2 * t**2 + t
    h01 = -2 * t**3 + 3 * t**2
    h11 = t**3 - t**2
    xy = np.outer(h00, a) + np.outer(h10, m0) + np.outer(h01, b) + np.outer(h11, m1)
    d00 = 6 * t**2 - 6 * t
    d10 = 3 * t**2 - 4 * t + 1
    d01 = -6 * t**2 + 6 * t
    d11 = 3 * t**2 - 2 * t
    tang = np.outer(d00, a) + np.outer(d10, m0) + np.outer(d01, b) + np.outer(d11, m1)

    poses = [p0]
    for k in range(1, n - 1):
        yaw = math.atan2(tang[k, 1], tang[k, 0]) if np.hypot(*tang[k]) > 1e-9 else poses[-1].yaw
        poses.append(Pose(float(xy[k, 0]), float(xy[k, 1]), yaw))
    poses.append(end)
    return Trajectory(poses, dt=traj.dt)
