"""Closed-loop log-replay simulation and evaluation.

Non-ego agents replay their recorded tracks and never react; the planner
callback receives the rendered BEV of the current simulated state and
returns an ego-frame trajectory whose first waypoint the ego teleports to
each 0.1 s step. Episodes are scored for collisions (with rear-end
attribution), off-road frames, getting stuck, route deviation and progress.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InfeasibleGoalError, LabelError
from .geometry import box_corners, boxes_intersect, point_along_polyline, point_in_any_polygon, project_to_polyline, wrap_angle
from .heatmap import (
    GtConfig,
    PatchRegion,
    adaptive_sigma,
    build_gt_heatmap,
    ego_lane_id,
    goal_label_pixel,
    nearest_lane_id,
    GoalLabel,
)
from .model import PlannerNet, argmax_goal, kinematic_fallback
from .raster import BevRaster, RasterConfig, rasterize
from .scenario import FRAME_DT, FRAME_HZ, Pose, Scenario, Trajectory


@dataclass(frozen=True)
class SimConfig:
    duration: float = 15.0  # seconds
    stuck_speed: float = 0.5  # m/s, averaged over the stuck window
    stuck_window: float = 5.0  # seconds
    deviation_seconds: float = 1.0
    deviation_lateral: float = 3.5  # one lane width
    lookahead: float = 15.0  # corridor / red-light horizon, meters
    corridor_margin: float = 0.4


@dataclass(frozen=True)
class OrientedBox:
    x: float
    y: float
    yaw: float
    length: float
    width: float

    def corners(self) -> np.ndarray:
        return box_corners(self.x, self.y, self.yaw, self.length, self.width)


@dataclass(frozen=True)
class CollisionEvent:
    frame: int
    agent_id: str
    kind: str  # "front" | "side" | "rear_end"
    rel_heading: float


@dataclass
class EpisodeMetrics:
    collisions: list[CollisionEvent]
    offroad_frames: int
    stuck: bool
    route_deviation: bool
    progress: float
    planner_faults: int
    passed: bool

    @property
    def rear_end_count(self) -> int:
        return sum(1 for c in self.collisions if c.kind == "rear_end")

    @property
    def at_fault_count(self) -> int:
        return sum(1 for c in self.collisions if c.kind != "rear_end")


def episode_pass(collisions, offroad_frames, stuck, route_deviation) -> bool:
    """Rear-end hits (the follower's responsibility) never fail an episode."""
    at_fault = any(c.kind != "rear_end" for c in collisions)
    return (not at_fault) and offroad_frames == 0 and not stuck and not route_deviation


def check_collision(
    ego: OrientedBox,
    agents: list[tuple[str, OrientedBox]],
    same_lane_ids: set[str] | None = None,
    frame: int = 0,
) -> list[CollisionEvent]:
    """Exact separating-axis overlap test plus front/side/rear classification.

    A hit is a rear-end when the other agent sits in the ego's rear arc,
    heads the same way, and (when lane information is supplied) shares the
    ego's lane.
    """
    assert ego.length > 0 and ego.width > 0
    ego_c = ego.corners()
    events = []
    for agent_id, box in agents:
        assert box.length > 0 and box.width > 0
        if not boxes_intersect(ego_c, box.corners()):
            continue
        dx, dy = box.x - ego.x, box.y - ego.y
        c, s = math.cos(-ego.yaw), math.sin(-ego.yaw)
        bearing = math.atan2(s * dx + c * dy, c * dx - s * dy)
        rel_heading = wrap_angle(box.yaw - ego.yaw)
        behind = abs(bearing) > 3.0 * math.pi / 4.0
        aligned = abs(rel_heading) < math.pi / 2.0
        same_lane = True if same_lane_ids is None else agent_id in same_lane_ids
        if behind and aligned and same_lane:
            kind = "rear_end"
        elif abs(bearing) <= math.pi / 4.0:
            kind = "front"
        else:
            kind = "side"
        events.append(CollisionEvent(frame=frame, agent_id=agent_id, kind=kind, rel_heading=rel_heading))
    return events


@dataclass(frozen=True)
class PlanInput:
    raster: BevRaster
    ego_pose: Pose
    ego_speed: float
    frame: int


@dataclass(frozen=True)
class SimState:
    frame: int
    ego_pose: Pose
    ego_speed: float
    history: tuple[Pose, ...]  # newest first, length n_history + 1
    events: tuple[CollisionEvent, ...] = ()
    collided_ids: frozenset = frozenset()
    offroad_frames: int = 0
    planner_faults: int = 0
    speeds: tuple[float, ...] = ()


def initial_state(s: Scenario, raster_cfg: RasterConfig) -> SimState:
    t0 = raster_cfg.n_history
    return SimState(
        frame=t0,
        ego_pose=s.ego.pose(t0),
        ego_speed=s.ego.speed(t0),
        history=tuple(s.ego.pose(t0 - k) for k in range(raster_cfg.n_history + 1)),
    )


def step(state: SimState, s: Scenario, planner, raster_cfg: RasterConfig | None = None) -> SimState:
    """Advance the closed loop by one frame (0.1 s)."""
    raster_cfg = raster_cfg or RasterConfig()
    if state.frame >= s.n_frames - 1:
        raise IndexError(f"frame {state.frame} at the end of the log")
    raster = rasterize(s, state.frame, raster_cfg, 0.0, ego_history=list(state.history))
    traj = planner(PlanInput(raster, state.ego_pose, state.ego_speed, state.frame))

    faults = state.planner_faults
    p = state.ego_pose
    if traj is None or len(traj.poses) == 0:
        faults += 1
        new_pose, speed = p, 0.0
    else:
        wp = traj.poses[0]
        c, sn = math.cos(p.yaw), math.sin(p.yaw)
        new_pose = Pose(p.x + c * wp.x - sn * wp.y, p.y + sn * wp.x + c * wp.y, p.yaw + wp.yaw)
        speed = math.dist((p.x, p.y), (new_pose.x, new_pose.y)) / FRAME_DT

    frame = state.frame + 1
    ego_box = OrientedBox(new_pose.x, new_pose.y, new_pose.yaw, s.ego.length, s.ego.width)
    nearby = []
    for a in s.agents:
        ap = a.pose(frame)
        if abs(ap.x - new_pose.x) + abs(ap.y - new_pose.y) < 25.0 and a.id not in state.collided_ids:
            nearby.append((a, ap))
    events = state.events
    collided = state.collided_ids
    if nearby:
        ego_lane = ego_lane_id(s, (new_pose.x, new_pose.y))
        same = {
            a.id
            for a, ap in nearby
            if ego_lane is not None and nearest_lane_id(s.map, (ap.x, ap.y)) == ego_lane
        }
        hits = check_collision(
            ego_box,
            [(a.id, OrientedBox(ap.x, ap.y, ap.yaw, a.length, a.width)) for a, ap in nearby],
            same_lane_ids=same,
            frame=frame,
        )
        if hits:
            events = events + tuple(hits)
            collided = collided | {h.agent_id for h in hits}

    offroad = state.offroad_frames
    if not point_in_any_polygon((new_pose.x, new_pose.y), s.map.drivable_polygons):
        offroad += 1

    return SimState(
        frame=frame,
        ego_pose=new_pose,
        ego_speed=speed,
        history=(new_pose, *state.history[:-1]),
        events=events,
        collided_ids=collided,
        offroad_frames=offroad,
        planner_faults=faults,
        speeds=state.speeds + (speed,),
    )


def _expert_path(s: Scenario) -> np.ndarray:
    return np.array([[p.x, p.y] for p in s.ego.poses])


def route_ahead_passable(
    s: Scenario, frame: int, ego_pose: Pose, expert_path: np.ndarray, cfg: SimConfig
) -> bool:
    """True when the ego could make progress: no governing red light ahead and
    a corridor wide enough for the ego exists around the replayed agents."""
    s_ego, _ = project_to_polyline(expert_path, (ego_pose.x, ego_pose.y))
    route = set(s.map.route_lanes)
    for light in s.map.traffic_lights:
        if light.is_red(frame) and route & set(light.controlled_lanes):
            s_l, lat = project_to_polyline(expert_path, light.position)
            if abs(lat) < 12.0 and s_ego - 3.0 <= s_l <= s_ego + cfg.lookahead:
                return False

    agents = []
    for a in s.agents:
        ap = a.pose(frame)
        if abs(ap.x - ego_pose.x) + abs(ap.y - ego_pose.y) < cfg.lookahead + 25.0:
            agents.append(box_corners(ap.x, ap.y, ap.yaw, a.length + 2 * cfg.corridor_margin, a.width + 2 * cfg.corridor_margin))
    if not agents:
        return True

    max_w = max((l.width for l in s.map.lanes), default=3.5)
    offsets = np.arange(-max_w, max_w + 1e-9, 0.35)
    for ds in np.arange(2.0, cfg.lookahead + 1e-9, 2.0):
        x, y, yaw = point_along_polyline(expert_path, s_ego + ds)
        nx, ny = -math.sin(yaw), math.cos(yaw)
        station_free = False
        for off in offsets:
            cx, cy = x + off * nx, y + off * ny
            if not point_in_any_polygon((cx, cy), s.map.drivable_polygons):
                continue
            cand = box_corners(cx, cy, float(yaw), s.ego.length, s.ego.width)
            if not any(boxes_intersect(cand, ab) for ab in agents):
                station_free = True
                break
        if not station_free:
            return False
    return True


def run_episode(
    s: Scenario,
    planner,
    raster_cfg: RasterConfig | None = None,
    sim_cfg: SimConfig | None = None,
    duration: float | None = None,
) -> EpisodeMetrics:
    raster_cfg = raster_cfg or RasterConfig()
    sim_cfg = sim_cfg or SimConfig()
    duration = duration if duration is not None else sim_cfg.duration
    n_steps = int(round(duration * FRAME_HZ))
    t0 = raster_cfg.n_history
    if t0 + n_steps > s.n_frames - 1:
        raise ValueError(
            f"duration {duration}s needs {t0 + n_steps + 1} frames, scenario has {s.n_frames}"
        )

    expert_path = _expert_path(s)
    state = initial_state(s, raster_cfg)
    s0, _ = project_to_polyline(expert_path, (state.ego_pose.x, state.ego_pose.y))
    progress = 0.0
    stuck = False
    deviation_run = 0
    route_deviation = False
    window = int(round(sim_cfg.stuck_window * FRAME_HZ))
    dev_frames = int(round(sim_cfg.deviation_seconds * FRAME_HZ))

    for _ in range(n_steps):
        state = step(state, s, planner, raster_cfg)
        pos = (state.ego_pose.x, state.ego_pose.y)
        st, _ = project_to_polyline(expert_path, pos)
        progress = max(progress, st - s0)

        lat = min(
            abs(project_to_polyline(s.map.lane_by_id(lid).centerline, pos)[1])
            for lid in s.map.route_lanes
        ) if s.map.route_lanes else 0.0
        deviation_run = deviation_run + 1 if lat > sim_cfg.deviation_lateral else 0
        if deviation_run > dev_frames:
            route_deviation = True

        if not stuck and len(state.speeds) >= window:
            if float(np.mean(state.speeds[-window:])) < sim_cfg.stuck_speed:
                if route_ahead_passable(s, state.frame, state.ego_pose, expert_path, sim_cfg):
                    stuck = True

    collisions = list(state.events)
    return EpisodeMetrics(
        collisions=collisions,
        offroad_frames=state.offroad_frames,
        stuck=stuck,
        route_deviation=route_deviation,
        progress=progress,
        planner_faults=state.planner_faults,
        passed=episode_pass(collisions, state.offroad_frames, stuck, route_deviation),
    )


# --- planners ---------------------------------------------------------------------

def full_stop_planner(inp: PlanInput) -> Trajectory:
    return Trajectory([Pose(0.0, 0.0, 0.0)] * 20)


def make_expert_replay_planner(s: Scenario):
    """Follows the recorded ego log exactly (waypoints relative to sim pose)."""

    def plan(inp: PlanInput) -> Trajectory:
        p = inp.ego_pose
        c, sn = math.cos(-p.yaw), math.sin(-p.yaw)
        poses = []
        for k in range(1, 21):
            q = s.ego.pose(min(inp.frame + k, s.n_frames - 1))
            dx, dy = q.x - p.x, q.y - p.y
            poses.append(Pose(c * dx - sn * dy, sn * dx + c * dy, q.yaw - p.yaw))
        return Trajectory(poses)

    return plan


def make_oracle_planner(
    s: Scenario, gt_cfg: GtConfig | None = None, raster_cfg: RasterConfig | None = None
):
    """Argmax over the ground-truth heatmap plus the kinematic arc fallback."""
    gt_cfg = gt_cfg or GtConfig()
    raster_cfg = raster_cfg or RasterConfig()
    size = (raster_cfg.height, raster_cfg.width)
    patch = PatchRegion.centered(size[0], size[1], gt_cfg.patch_fraction)

    def plan(inp: PlanInput) -> Trajectory:
        tf = inp.raster.transform
        frame = min(inp.frame, s.n_frames - 21)
        try:
            rc = goal_label_pixel(s, frame, tf, size)
            sigma = adaptive_sigma(s, rc, frame, gt_cfg, tf, size)
            heat, _, _ = build_gt_heatmap(s, frame, GoalLabel(rc[0], rc[1], sigma), gt_cfg, tf, size)
            goal = argmax_goal(heat, patch)
        except (LabelError, IndexError):
            return full_stop_planner(inp)
        try:
            return kinematic_fallback(goal, inp.ego_speed, raster_cfg)
        except InfeasibleGoalError:
            return full_stop_planner(inp)

    return plan


def make_model_planner(net: PlannerNet, raster_cfg: RasterConfig, gt_cfg: GtConfig | None = None):
    """The trained two-stage planner: heatmap argmax goal + trajectory head."""
    gt_cfg = gt_cfg or GtConfig()
    patch = PatchRegion.centered(raster_cfg.height, raster_cfg.width, gt_cfg.patch_fraction)
    size = (raster_cfg.height, raster_cfg.width)

    def plan(inp: PlanInput) -> Trajectory:
        heat, emb, _ = net.forward(inp.raster.channels[None])
        goal = argmax_goal(heat[0], patch)
        return net.predict_trajectory(goal, emb[0], inp.ego_speed, size)

    return plan


# --- suite evaluation ----------------------------------------------------------------

def scenario_id(s: Scenario, index: int) -> str:
    return f"{s.category.value}_{s.seed:06d}_{index:04d}"


def evaluate_suite(
    scenarios: list[Scenario],
    make_planner,
    raster_cfg: RasterConfig | None = None,
    sim_cfg: SimConfig | None = None,
    workers: int = 1,
) -> dict:
    """Run every scenario and aggregate a machine-readable report."""
    if not scenarios:
        raise ValueError("scenario list must be non-empty")
    raster_cfg = raster_cfg or RasterConfig()
    sim_cfg = sim_cfg or SimConfig()

    if workers > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(workers) as pool:
            rows = pool.starmap(
                _episode_row,
                [(i, s, make_planner, raster_cfg, sim_cfg) for i, s in enumerate(scenarios)],
            )
    else:
        rows = [_episode_row(i, s, make_planner, raster_cfg, sim_cfg) for i, s in enumerate(scenarios)]
    rows.sort(key=lambda r: r["id"])

    categories: dict[str, dict] = {}
    for row in rows:
        c = categories.setdefault(
            row["category"], {"total": 0, "passed": 0, "collisions": 0, "rear_end": 0}
        )
        c["total"] += 1
        c["passed"] += int(row["pass"])
        c["collisions"] += row["collisions"]
        c["rear_end"] += row["rear_end"]
    total = len(rows)
    passed = sum(int(r["pass"]) for r in rows)
    return {
        "format_version": 1,
        "scenarios": rows,
        "categories": categories,
        "totals": {
            "total": total,
            "passed": passed,
            "pass_rate": passed / total,
            "collisions": sum(r["collisions"] for r in rows),
            "rear_end": sum(r["rear_end"] for r in rows),
        },
    }


def _episode_row(index: int, s: Scenario, make_planner, raster_cfg, sim_cfg) -> dict:
    m = run_episode(s, make_planner(s), raster_cfg, sim_cfg)
    return {
        "id": scenario_id(s, index),
        "category": s.category.value,
        "pass": m.passed,
        "collisions": len(m.collisions),
        "rear_end": m.rear_end_count,
        "offroad_frames": m.offroad_frames,
        "stuck": m.stuck,
        "route_deviation": m.route_deviation,
        "progress_m": round(m.progress, 3),
        "planner_faults": m.planner_faults,
    }


def format_summary(report: dict) -> str:
    lines = ["category            total  pass  collisions  rear_end"]
    for cat, c in sorted(report["categories"].items()):
        lines.append(
            f"{cat:<18} {c['total']:>6} {c['passed']:>5} {c['collisions']:>11} {c['rear_end']:>9}"
        )
    t = report["totals"]
    lines.append(
        f"{'TOTAL':<18} {t['total']:>6} {t['passed']:>5} {t['collisions']:>11} {t['rear_end']:>9}"
        f"   pass rate {100.0 * t['pass_rate']:.1f}%"
    )
    return "\n".join(lines)


# --- out-of-distribution suites ---------------------------------------------------------

@dataclass(frozen=True)
class OodConfig:
    ego_pos_offset: float = 3.0
    ego_yaw_offset: float = 0.5
    speed_scale: tuple[float, float] = (0.7, 1.3)
    agent_pos_jitter: float = 1.0
    seed: int = 0

    @property
    def is_identity(self) -> bool:
        return (
            self.ego_pos_offset == 0.0
            and self.ego_yaw_offset == 0.0
            and self.agent_pos_jitter == 0.0
            and self.speed_scale == (1.0, 1.0)
        )


def make_ood_suite(
    scenarios: list[Scenario], cfg: OodConfig, raster_cfg: RasterConfig | None = None
) -> list[Scenario]:
    """Perturbed copies of the input scenarios (ego start pose/speed offsets,
    rigid agent-track jitter); copies whose perturbation creates an overlap at
    the simulation start frame are dropped."""
    if cfg.is_identity:
        return list(scenarios)
    raster_cfg = raster_cfg or RasterConfig()
    t0 = raster_cfg.n_history
    out = []
    for s in scenarios:
        rng = np.random.default_rng([cfg.seed + 1, abs(s.seed) + 1])
        dx, dy = rng.uniform(-cfg.ego_pos_offset, cfg.ego_pos_offset, size=2)
        dyaw = float(rng.uniform(-cfg.ego_yaw_offset, cfg.ego_yaw_offset))
        scale = float(rng.uniform(*cfg.speed_scale))
        anchor = s.ego.pose(t0)
        c, sn = math.cos(dyaw), math.sin(dyaw)
        new_ego_poses = list(s.ego.poses)
        for k in range(t0 + 1):
            p = s.ego.poses[k]
            rx, ry = (p.x - anchor.x) * scale, (p.y - anchor.y) * scale
            new_ego_poses[k] = Pose(
                anchor.x + c * rx - sn * ry + dx, anchor.y + sn * rx + c * ry + dy, p.yaw + dyaw
            )
        ego = replace(s.ego, poses=new_ego_poses)
        agents = []
        for a in s.agents:
            jx, jy = rng.uniform(-cfg.agent_pos_jitter, cfg.agent_pos_jitter, size=2)
            agents.append(replace(a, poses=[Pose(p.x + jx, p.y + jy, p.yaw) for p in a.poses]))
        cand = Scenario(s.map, ego, agents, s.n_frames, s.category, s.seed)
        boxes = [
            box_corners(t.pose(t0).x, t.pose(t0).y, t.pose(t0).yaw, t.length, t.width)
            for t in [ego, *agents]
        ]
        overlap = any(
            boxes_intersect(boxes[i], boxes[j])
            for i in range(len(boxes))
            for j in range(i + 1, len(boxes))
        )
        if not overlap:
            out.append(cand)
    return out
