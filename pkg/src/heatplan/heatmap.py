"""Ground-truth goal-heatmap construction.

The heatmap starts at a 0.5 baseline, gains a truncated positive Gaussian
kernel at the expert's 2 s goal and loses truncated negative kernels at the
horizon-end positions of (filtered) traffic agents; off-road pixels are
zeroed. The positive kernel width is chosen adaptively: the widest candidate
whose 3-sigma support square touches neither an agent footprint nor the
off-road region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, LabelError
from .geometry import box_corners, project_to_polyline
from .raster import RasterConfig, RasterTransform, _paint_convex, drivable_mask, make_transform
from .scenario import AgentTrack, Pose, RoadMap, Scenario

HORIZON_FRAMES = 20  # 2 s at 10 Hz


@dataclass(frozen=True)
class GtConfig:
    sigma_candidates: tuple[float, ...] = (5.0, 4.0, 3.0, 2.0, 1.0)
    neg_sigma: float = 2.0
    baseline: float = 0.5
    patch_fraction: float = 0.5
    drivable_weight: float = 0.6

    def __post_init__(self):
        cand = self.sigma_candidates
        if not cand or any(s <= 0 for s in cand) or any(
            cand[i] <= cand[i + 1] for i in range(len(cand) - 1)
        ):
            raise ConfigError("sigma_candidates must be positive and strictly decreasing")
        if not (0.0 < self.baseline < 1.0):
            raise ConfigError("baseline must lie in (0, 1)")
        if not (0.0 < self.patch_fraction <= 1.0):
            raise ConfigError("patch_fraction must lie in (0, 1]")
        if self.neg_sigma <= 0:
            raise ConfigError("neg_sigma must be positive")


@dataclass(frozen=True)
class PatchRegion:
    """Half-open pixel rectangle [row0, row1) x [col0, col1)."""

    row0: int
    col0: int
    row1: int
    col1: int

    @classmethod
    def centered(cls, height: int, width: int, fraction: float) -> "PatchRegion":
        ph = max(1, round(height * fraction))
        pw = max(1, round(width * fraction))
        r0 = (height - ph) // 2
        c0 = (width - pw) // 2
        return cls(r0, c0, r0 + ph, c0 + pw)

    @property
    def rows(self) -> slice:
        return slice(self.row0, self.row1)

    @property
    def cols(self) -> slice:
        return slice(self.col0, self.col1)

    @property
    def n_pixels(self) -> int:
        return (self.row1 - self.row0) * (self.col1 - self.col0)

    def contains(self, row: int, col: int) -> bool:
        return self.row0 <= row < self.row1 and self.col0 <= col < self.col1


@dataclass(frozen=True)
class GoalLabel:
    row: int
    col: int
    sigma_used: float


def gaussian_kernel(center: tuple[int, int], sigma: float, size: tuple[int, int]) -> np.ndarray:
    """Unnormalized 2D Gaussian, exactly zero outside the 3-sigma L-inf box.

    `center` is (row, col); the center pixel has value 1.
    """
    if sigma <= 0:
        raise ConfigError("sigma must be positive")
    h, w = size
    r0, c0 = center
    out = np.zeros((h, w))
    rad = int(math.floor(3.0 * sigma + 1e-9))
    ra, rb = max(0, r0 - rad), min(h - 1, r0 + rad)
    ca, cb = max(0, c0 - rad), min(w - 1, c0 + rad)
    if ra > rb or ca > cb:
        return out
    rr = np.arange(ra, rb + 1) - r0
    cc = np.arange(ca, cb + 1) - c0
    out[ra : rb + 1, ca : cb + 1] = np.exp(
        -(rr[:, None] ** 2 + cc[None, :] ** 2) / (2.0 * sigma * sigma)
    )
    return out


def nearest_lane_id(road: RoadMap, point, margin: float = 0.3) -> str | None:
    """Lane whose centerline is laterally closest, within half-width + margin."""
    best = None
    best_d = math.inf
    for lane in road.lanes:
        _, lateral = project_to_polyline(lane.centerline, point)
        if abs(lateral) < best_d:
            best_d = abs(lateral)
            best = lane
    if best is not None and best_d <= best.width / 2.0 + margin:
        return best.id
    return None


def rear_agent_filter(
    agents: list[AgentTrack],
    ego_pose: Pose,
    ego_lane_id: str | None,
    road: RoadMap,
    frame: int,
) -> list[AgentTrack]:
    """Drop agents currently behind the ego in the ego's own lane.

    "Behind" is measured by arc-length station along the ego's lane
    centerline; agents in other lanes (or off-lane) are always retained.
    """
    if ego_lane_id is None or not agents:
        return list(agents)
    lane = road.lane_by_id(ego_lane_id)
    s_ego, _ = project_to_polyline(lane.centerline, (ego_pose.x, ego_pose.y))
    kept = []
    for a in agents:
        p = a.pose(frame)
        if nearest_lane_id(road, (p.x, p.y)) == ego_lane_id:
            s_a, _ = project_to_polyline(lane.centerline, (p.x, p.y))
            if s_a < s_ego:
                continue
        kept.append(a)
    return kept


def agent_occupancy(
    s: Scenario,
    agents: list[AgentTrack],
    frame: int,
    tf: RasterTransform,
    size: tuple[int, int],
) -> np.ndarray:
    """Boolean (H, W) mask of pixels covered by any agent footprint at `frame`."""
    occ = np.zeros(size, dtype=np.float32)
    for a in agents:
        p = a.pose(frame)
        _paint_convex(occ, tf.world_to_pixel(box_corners(p.x, p.y, p.yaw, a.length, a.width)), 1.0)
    return occ > 0.5


def select_sigma(
    goal: tuple[int, int], blocked: np.ndarray, candidates: tuple[float, ...]
) -> float:
    """Largest candidate whose 3-sigma support square avoids `blocked` pixels."""
    h, w = blocked.shape
    r0, c0 = goal
    for sigma in candidates:
        rad = int(math.floor(3.0 * sigma + 1e-9))
        window = blocked[
            max(0, r0 - rad) : min(h, r0 + rad + 1), max(0, c0 - rad) : min(w, c0 + rad + 1)
        ]
        if not window.any():
            return sigma
    return candidates[-1]


def adaptive_sigma(
    s: Scenario,
    goal: tuple[int, int],
    frame: int,
    config: GtConfig,
    tf: RasterTransform,
    size: tuple[int, int],
    horizon: int = HORIZON_FRAMES,
) -> float:
    """Spec-level wrapper: build the blocking mask for this sample, then select."""
    agents = _filtered_agents(s, frame, tf)
    occ = agent_occupancy(s, agents, frame + horizon, tf, size)
    blocked = occ | ~drivable_mask(s, tf, *size)
    return select_sigma(goal, blocked, config.sigma_candidates)


def ego_lane_id(s: Scenario, point) -> str | None:
    """The ego's current lane: the laterally nearest route lane (the lane it
    is driving), or the nearest map lane when the route is empty."""
    best, best_d = None, math.inf
    for lid in s.map.route_lanes:
        _, lateral = project_to_polyline(s.map.lane_by_id(lid).centerline, point)
        if abs(lateral) < best_d:
            best_d, best = abs(lateral), lid
    return best if best is not None else nearest_lane_id(s.map, point)


def _filtered_agents(s: Scenario, frame: int, tf: RasterTransform) -> list[AgentTrack]:
    ego_pose = tf.ego_pose
    return rear_agent_filter(
        s.agents, ego_pose, ego_lane_id(s, (ego_pose.x, ego_pose.y)), s.map, frame
    )


def goal_label_pixel(
    s: Scenario,
    frame: int,
    tf: RasterTransform,
    size: tuple[int, int],
    horizon: int = HORIZON_FRAMES,
) -> tuple[int, int]:
    """Pixel of the expert pose at the planning-horizon end; raises LabelError
    when it falls outside the grid."""
    if frame + horizon >= s.n_frames:
        raise IndexError(f"frame {frame} + horizon {horizon} exceeds scenario length")
    p = s.ego.pose(frame + horizon)
    px, py = tf.world_to_pixel(np.array([p.x, p.y]))
    row, col = int(np.rint(py)), int(np.rint(px))
    if not (0 <= row < size[0] and 0 <= col < size[1]):
        raise LabelError(f"goal pixel ({row}, {col}) outside the {size} grid")
    return row, col


def build_gt_heatmap(
    s: Scenario,
    frame: int,
    goal: GoalLabel,
    config: GtConfig,
    tf: RasterTransform,
    size: tuple[int, int],
    horizon: int = HORIZON_FRAMES,
) -> tuple[np.ndarray, np.ndarray, PatchRegion]:
    """Ground-truth heatmap, hourglass weight mask and the center loss patch.

    heatmap = clamp(b + b*G_pos - b*max_a G_neg_a, 0, 1) with baseline b,
    then off-road pixels forced to exactly 0. The weight mask is
    `drivable_weight` exactly where the heatmap equals the baseline, 1
    elsewhere.
    """
    h, w = size
    on_road = drivable_mask(s, tf, h, w)
    if not on_road[goal.row, goal.col]:
        raise LabelError(f"goal pixel ({goal.row}, {goal.col}) is off-road; sample rejected")

    b = config.baseline
    pos = gaussian_kernel((goal.row, goal.col), goal.sigma_used, size)
    neg = np.zeros(size)
    for a in _filtered_agents(s, frame, tf):
        p = a.pose(frame + horizon)
        px, py = tf.world_to_pixel(np.array([p.x, p.y]))
        center = (int(np.rint(py)), int(np.rint(px)))
        np.maximum(neg, gaussian_kernel(center, config.neg_sigma, size), out=neg)

    heat = np.clip(b + b * pos - b * neg, 0.0, 1.0)
    heat[~on_road] = 0.0
    weights = np.where(heat == b, config.drivable_weight, 1.0)
    patch = PatchRegion.centered(h, w, config.patch_fraction)
    return heat, weights, patch


def build_gt_sample(
    s: Scenario,
    frame: int,
    config: GtConfig,
    raster_config: RasterConfig,
    extra_rotation: float = 0.0,
    ego_current: Pose | None = None,
    horizon: int = HORIZON_FRAMES,
):
    """Convenience pipeline: transform, goal pixel, adaptive sigma, heatmap.

    Returns (heatmap, weights, patch, GoalLabel, transform).
    """
    size = (raster_config.height, raster_config.width)
    tf = make_transform(ego_current or s.ego.pose(frame), raster_config, extra_rotation)
    row, col = goal_label_pixel(s, frame, tf, size, horizon)
    sigma = adaptive_sigma(s, (row, col), frame, config, tf, size, horizon)
    goal = GoalLabel(row, col, sigma)
    heat, weights, patch = build_gt_heatmap(s, frame, goal, config, tf, size, horizon)
    return heat, weights, patch, goal, tf
