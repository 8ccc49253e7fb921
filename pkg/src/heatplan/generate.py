"""Procedural scenario generators for the four evaluation categories.

Each generator is a pure function of (category, seed, config): it builds the
road geometry, the expert ego track and all agent tracks on the shared 10 Hz
clock, then rigidly remaps the whole world by a seed-dependent rotation and
translation so that scenarios do not share a privileged frame. Expert tracks
are constructed collision-free and on-road by spacing rules, and validated
against both properties before being returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .geometry import (
    box_corners,
    boxes_intersect,
    corridor_polygon,
    point_in_any_polygon,
    rot2d,
)
from .scenario import (
    FRAME_DT,
    AgentTrack,
    Category,
    Lane,
    Pose,
    RoadMap,
    Scenario,
    TrafficLight,
)

_CATEGORY_CODE = {
    Category.LANE_FOLLOWING: 1,
    Category.LANE_CHANGING: 2,
    Category.INTERSECTION: 3,
    Category.FLEXIBILITY: 4,
}


@dataclass(frozen=True)
class GeneratorConfig:
    n_frames: int = 180
    lane_width: float = 3.5
    vehicle_length: float = 4.5
    vehicle_width: float = 2.0
    speed_min: float = 4.0
    speed_max: float = 8.0
    n_agents: int | None = None  # None: category-dependent draw
    world_jitter: bool = True  # random rigid remap of the finished world

    def validate(self) -> None:
        if self.n_frames < 26:
            raise ConfigError("n_frames must cover history (5) + horizon (20) + current frame")
        if self.lane_width <= 0:
            raise ConfigError("lane width must be positive")
        if self.lane_width <= self.vehicle_width:
            raise ConfigError("lane width must exceed vehicle width")
        if not (0 < self.speed_min <= self.speed_max):
            raise ConfigError("need 0 < speed_min <= speed_max")


def generate_scenario(category: Category, seed: int, config: GeneratorConfig | None = None) -> Scenario:
    """Build one deterministic scenario of the requested category."""
    config = config or GeneratorConfig()
    config.validate()
    category = Category(category)
    rng = np.random.default_rng([abs(int(seed)) + 1, _CATEGORY_CODE[category]])
    builder = {
        Category.LANE_FOLLOWING: _gen_lane_following,
        Category.LANE_CHANGING: _gen_lane_changing,
        Category.INTERSECTION: _gen_intersection,
        Category.FLEXIBILITY: _gen_flexibility,
    }[category]
    scenario = builder(rng, seed, config)
    if config.world_jitter:
        scenario = _rigid_remap(
            scenario,
            angle=rng.uniform(-math.pi, math.pi),
            offset=rng.uniform(-300.0, 300.0, size=2),
        )
    _validate_world(scenario)
    return scenario


# --- small building blocks ---------------------------------------------------

def _poses_from_xy(xy: np.ndarray, yaw_hint: np.ndarray | None = None) -> list[Pose]:
    """Poses with yaw from the motion direction; yaw is held while stationary."""
    n = len(xy)
    yaw = np.zeros(n)
    last = None
    for i in range(n):
        a = xy[max(0, i - 1)]
        b = xy[min(n - 1, i + 1)]
        d = b - a
        if np.hypot(d[0], d[1]) > 1e-6:
            last = math.atan2(d[1], d[0])
        if last is None:
            last = float(yaw_hint[i]) if yaw_hint is not None else 0.0
        yaw[i] = last
    return [Pose(float(x), float(y), float(t)) for (x, y), t in zip(xy, yaw)]


def _stations(speeds: np.ndarray) -> np.ndarray:
    """Arc-length station at each frame from a per-frame speed profile."""
    s = np.concatenate([[0.0], np.cumsum(speeds[:-1]) * FRAME_DT])
    return s


def _cruise_speeds(rng, n: int, v0: float, ripple: float = 0.1) -> np.ndarray:
    """Cruise profile with a slow sinusoidal ripple and an optional start ramp."""
    t = np.arange(n) * FRAME_DT
    period = rng.uniform(5.0, 9.0)
    phase = rng.uniform(0.0, 2 * math.pi)
    v = v0 * (1.0 + ripple * np.sin(2 * math.pi * t / period + phase))
    if rng.random() < 0.3:  # some episodes start below cruise speed
        ramp_T = rng.uniform(2.0, 4.0)
        v *= np.clip((t + 0.5 * ramp_T) / ramp_T, 0.55, 1.0)
    return np.maximum(v, 0.0)


def _arc_centerline(length: float, curvature: float, spacing: float = 4.0) -> np.ndarray:
    """Centerline of constant curvature starting at the origin heading +x."""
    n = max(2, int(length / spacing) + 1)
    s = np.linspace(0.0, length, n)
    if abs(curvature) < 1e-9:
        return np.stack([s, np.zeros_like(s)], axis=1)
    return np.stack(
        [np.sin(curvature * s) / curvature, (1.0 - np.cos(curvature * s)) / curvature], axis=1
    )


def _offset_curve(center: np.ndarray, offset: float) -> np.ndarray:
    from .geometry import offset_polyline

    return offset_polyline(center, offset)


def _interp_path(path: np.ndarray, stations: np.ndarray) -> np.ndarray:
    from .geometry import polyline_lengths

    s = polyline_lengths(path)
    st = np.clip(stations, 0.0, s[-1])
    return np.stack([np.interp(st, s, path[:, 0]), np.interp(st, s, path[:, 1])], axis=1)


def _road(
    center: np.ndarray,
    lane_offsets: list[float],
    lane_ids: list[str],
    lane_width: float,
) -> tuple[list[Lane], np.ndarray]:
    """Parallel lanes offset from a base centerline plus the covering polygon."""
    lanes = [
        Lane(id=lid, width=lane_width, centerline=_offset_curve(center, off))
        for lid, off in zip(lane_ids, lane_offsets)
    ]
    lo, hi = min(lane_offsets), max(lane_offsets)
    road_width = (hi - lo) + lane_width
    road_center = _offset_curve(center, 0.5 * (hi + lo))
    return lanes, corridor_polygon(road_center, road_width)


def _vehicle(rng, cfg: GeneratorConfig, agent_id: str, xy: np.ndarray) -> AgentTrack:
    length = cfg.vehicle_length * rng.uniform(0.9, 1.1)
    width = cfg.vehicle_width * rng.uniform(0.9, 1.1)
    return AgentTrack(id=agent_id, length=length, width=width, poses=_poses_from_xy(xy))


# --- categories --------------------------------------------------------------

def _gen_lane_following(rng, seed: int, cfg: GeneratorConfig) -> Scenario:
    n = cfg.n_frames
    v0 = rng.uniform(cfg.speed_min, cfg.speed_max)
    n_lanes = int(rng.integers(2, 4))
    ego_lane = int(rng.integers(0, n_lanes))
    curvature = float(rng.choice([0.0, 1.0, -1.0]) * rng.uniform(0.002, 0.006))
    length = v0 * n * FRAME_DT * 1.3 + 80.0
    center = _arc_centerline(length, curvature)
    offsets = [i * cfg.lane_width for i in range(n_lanes)]
    ids = [f"lane_{i}" for i in range(n_lanes)]
    lanes, drivable = _road(center, offsets, ids, cfg.lane_width)
    ego_path = lanes[ego_lane].centerline

    speeds = _cruise_speeds(rng, n, v0)
    ego_xy = _interp_path(ego_path, _stations(speeds) + 10.0)
    ego = AgentTrack("ego", cfg.vehicle_length, cfg.vehicle_width, _poses_from_xy(ego_xy))

    n_agents = cfg.n_agents if cfg.n_agents is not None else int(rng.integers(1, 5))
    agents = []
    if n_agents > 0:
        # lead vehicle in the ego lane, never slower than the ego cruise speed
        gap = rng.uniform(22.0, 40.0)
        lead_v = v0 * rng.uniform(1.0, 1.15)
        lead_xy = _interp_path(ego_path, _stations(np.full(n, lead_v)) + 10.0 + gap)
        agents.append(_vehicle(rng, cfg, "agent_0", lead_xy))
    for k in range(1, n_agents):
        lane_k = int(rng.integers(0, n_lanes))
        if lane_k == ego_lane:
            lane_k = (lane_k + 1) % n_lanes
        if n_lanes == 1:
            break
        start = rng.uniform(0.0, 60.0)
        v_k = rng.uniform(0.6, 1.2) * v0
        xy = _interp_path(lanes[lane_k].centerline, _stations(np.full(n, v_k)) + start)
        agents.append(_vehicle(rng, cfg, f"agent_{k}", xy))

    road = RoadMap(lanes=lanes, drivable_polygons=[drivable], route_lanes=[ids[ego_lane]])
    return Scenario(road, ego, agents, n, Category.LANE_FOLLOWING, seed)


def _gen_lane_changing(rng, seed: int, cfg: GeneratorConfig) -> Scenario:
    n = cfg.n_frames
    v0 = rng.uniform(cfg.speed_min, cfg.speed_max)
    n_lanes = 3
    start_lane = int(rng.integers(0, n_lanes))
    direction = 1 if start_lane == 0 else (-1 if start_lane == n_lanes - 1 else int(rng.choice([-1, 1])))
    target_lane = start_lane + direction
    length = v0 * n * FRAME_DT * 1.3 + 80.0
    center = _arc_centerline(length, 0.0)
    offsets = [i * cfg.lane_width for i in range(n_lanes)]
    ids = [f"lane_{i}" for i in range(n_lanes)]
    lanes, drivable = _road(center, offsets, ids, cfg.lane_width)

    speeds = _cruise_speeds(rng, n, v0, ripple=0.05)
    st = _stations(speeds) + 10.0
    t = np.arange(n) * FRAME_DT
    t_start = rng.uniform(3.0, 5.0)
    t_span = rng.uniform(2.5, 3.5)
    u = np.clip((t - t_start) / t_span, 0.0, 1.0)
    blend = u * u * (3.0 - 2.0 * u)  # smoothstep
    lateral = offsets[start_lane] + blend * (offsets[target_lane] - offsets[start_lane])
    base = _interp_path(center, st)
    tangents = np.gradient(base, axis=0)
    tangents /= np.maximum(np.linalg.norm(tangents, axis=1, keepdims=True), 1e-12)
    normals = np.stack([-tangents[:, 1], tangents[:, 0]], axis=1)
    ego_xy = base + lateral[:, None] * normals
    ego = AgentTrack("ego", cfg.vehicle_length, cfg.vehicle_width, _poses_from_xy(ego_xy))

    agents = []
    # slow lead in the start lane: the reason to change lanes
    lead_v = v0 * rng.uniform(0.6, 0.8)
    lead_gap = rng.uniform(30.0, 40.0) + (v0 - lead_v) * 3.0
    lead_xy = _interp_path(lanes[start_lane].centerline, _stations(np.full(n, lead_v)) + 10.0 + lead_gap)
    agents.append(_vehicle(rng, cfg, "agent_0", lead_xy))
    # follower in the target lane, holding a constant gap behind the ego
    fol_xy = _interp_path(lanes[target_lane].centerline, _stations(np.full(n, v0)) + 10.0 - rng.uniform(18.0, 28.0))
    agents.append(_vehicle(rng, cfg, "agent_1", fol_xy))
    n_extra = (cfg.n_agents - 2) if cfg.n_agents is not None else int(rng.integers(0, 2))
    far_lane = [i for i in range(n_lanes) if i not in (start_lane, target_lane)][0]
    for k in range(max(0, n_extra)):
        xy = _interp_path(
            lanes[far_lane].centerline,
            _stations(np.full(n, v0 * rng.uniform(0.7, 1.2))) + rng.uniform(0.0, 70.0),
        )
        agents.append(_vehicle(rng, cfg, f"agent_{k + 2}", xy))
    if cfg.n_agents == 0:
        agents = []

    road = RoadMap(
        lanes=lanes,
        drivable_polygons=[drivable],
        route_lanes=[ids[start_lane], ids[target_lane]],
    )
    return Scenario(road, ego, agents, n, Category.LANE_CHANGING, seed)


def _gen_intersection(rng, seed: int, cfg: GeneratorConfig) -> Scenario:
    n = cfg.n_frames
    w = cfg.lane_width
    half = w / 2.0
    arm = 140.0
    box = w  # half-extent of the junction box (two lanes per road)

    def straight(p0, p1):
        p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
        k = max(2, int(np.linalg.norm(p1 - p0) / 4.0))
        return np.linspace(p0, p1, k)

    lanes = [
        Lane("ew_e", w, straight((-arm, -half), (arm, -half))),  # eastbound
        Lane("ew_w", w, straight((arm, half), (-arm, half))),  # westbound
        Lane("ns_n", w, straight((half, -arm), (half, arm))),  # northbound
        Lane("ns_s", w, straight((-half, arm), (-half, -arm))),  # southbound
    ]
    drivable = [
        np.array([[-arm, -w], [arm, -w], [arm, w], [-arm, w]], float),
        np.array([[-w, -arm], [w, -arm], [w, arm], [-w, arm]], float),
    ]
    crosswalks = [
        np.array([[-box - 2.5, -w], [-box - 1.0, -w], [-box - 1.0, w], [-box - 2.5, w]], float),
        np.array([[-w, box + 1.0], [w, box + 1.0], [w, box + 2.5], [-w, box + 2.5]], float),
    ]

    turn = rng.choice(["straight", "left", "right"])
    v0 = rng.uniform(cfg.speed_min, min(cfg.speed_max, 8.0))
    v_turn = rng.uniform(3.0, 4.0)

    # ego path: eastbound approach, then straight / left to northbound / right to southbound
    if turn == "straight":
        path = straight((-arm, -half), (arm, -half))
        route = ["ew_e"]
        exit_lane = "ew_e"
    elif turn == "left":
        r = box + half  # arc from (-box,-half) to (half,box)
        ang = np.linspace(-math.pi / 2.0, 0.0, 24)
        arc = np.stack([-box + r * np.cos(ang), box + r * np.sin(ang)], axis=1)
        path = np.vstack([straight((-arm, -half), (-box, -half))[:-1], arc, straight((half, box), (half, arm))[1:]])
        route = ["ew_e", "ns_n"]
        exit_lane = "ns_n"
    else:
        r = rng.uniform(4.5, 5.5)
        c = r + half
        ang = np.linspace(math.pi / 2.0, 0.0, 16)
        arc = np.stack([-c + r * np.cos(ang), -c + r * np.sin(ang)], axis=1)
        path = np.vstack([straight((-arm, -half), (-c, -half))[:-1], arc, straight((-half, -c), (-half, -arm))[1:]])
        route = ["ew_e", "ns_s"]
        exit_lane = "ns_s"

    # stop line 2 m before the approach crosswalk
    stop_station = (arm - box - 4.5)
    turn_entry = arm - box - half  # begin slowing before the junction
    wait = rng.random() < 0.5
    green_frame = int(rng.uniform(5.0, 7.0) / FRAME_DT) if wait else 0

    speeds = np.zeros(n)
    v = v0
    s = 10.0
    stations = np.zeros(n)
    for i in range(n):
        stations[i] = s
        target = v0
        if s > turn_entry - 25.0 and turn != "straight":
            target = v_turn if s < turn_entry + 2.0 * box + 10.0 else v0
        if wait and i < green_frame:
            # brake to a standstill at the stop line
            dist = stop_station - s
            if dist <= 0.0:
                target = 0.0
            else:
                target = min(target, math.sqrt(2.0 * 2.5 * dist))
        v += np.clip(target - v, -2.5 * FRAME_DT, 1.5 * FRAME_DT)
        v = max(v, 0.0)
        speeds[i] = v
        s += v * FRAME_DT
    ego_xy = _interp_path(path, stations)
    ego = AgentTrack("ego", cfg.vehicle_length, cfg.vehicle_width, _poses_from_xy(ego_xy))

    states_ego = ("r" * green_frame + "g" * n)[:n]
    states_cross = ("g" * green_frame + "r" * n)[:n]
    lights = [
        TrafficLight((-box - 2.0, -w), ["ew_e", "ew_w"], states_ego),
        TrafficLight((-w, box + 2.0), ["ns_n", "ns_s"], states_cross),
    ]

    agents = []
    n_agents = cfg.n_agents if cfg.n_agents is not None else int(rng.integers(1, 4))
    if wait and n_agents > 0:
        # cross traffic clears the junction during the ego's red phase
        v_c = rng.uniform(7.0, 9.0)
        start = -arm + rng.uniform(0.0, 20.0)
        xy = _interp_path(lanes[2].centerline, _stations(np.full(n, v_c)) + (start + arm))
        agents.append(_vehicle(rng, cfg, "agent_0", xy))
    elif n_agents > 0:
        # oncoming westbound traffic, clear of the ego path
        xy = _interp_path(lanes[1].centerline, _stations(np.full(n, v0 * 0.9)) + rng.uniform(0.0, 40.0))
        agents.append(_vehicle(rng, cfg, "agent_0", xy))
    if n_agents > 1:
        # a pedestrian walking on the far sidewalk, outside the drivable area
        py = w + 1.5
        px = np.linspace(-30.0, -30.0 + 1.4 * n * FRAME_DT, n)
        ped_xy = np.stack([px, np.full(n, py)], axis=1)
        agents.append(AgentTrack("agent_1", 0.6, 0.6, _poses_from_xy(ped_xy), kind="pedestrian"))
    if n_agents > 2:
        # queued vehicle on the southbound arm, waiting at its line
        x0 = -half
        yq = np.full(n, box + 8.0)
        if not wait:
            pass  # stays queued the whole episode (its light is red)
        q_xy = np.stack([np.full(n, x0), yq], axis=1)
        agents.append(_vehicle(rng, cfg, "agent_2", q_xy))

    road = RoadMap(
        lanes=lanes,
        drivable_polygons=drivable,
        crosswalks=crosswalks,
        traffic_lights=lights,
        route_lanes=route,
    )
    _ = exit_lane
    return Scenario(road, ego, agents, n, Category.INTERSECTION, seed)


def _gen_flexibility(rng, seed: int, cfg: GeneratorConfig) -> Scenario:
    n = cfg.n_frames
    v0 = rng.uniform(cfg.speed_min, min(cfg.speed_max, 7.0))
    length = v0 * n * FRAME_DT * 1.3 + 80.0
    center = _arc_centerline(length, 0.0)
    offsets = [0.0, cfg.lane_width]
    ids = ["lane_0", "lane_1"]
    lanes, drivable = _road(center, offsets, ids, cfg.lane_width)

    # stopped vehicle straddling the right edge of the ego lane
    blocker_w = cfg.vehicle_width * rng.uniform(0.9, 1.1)
    blocker_l = cfg.vehicle_length * rng.uniform(0.9, 1.1)
    s_block = rng.uniform(45.0, 65.0)
    d_block = -(cfg.lane_width / 2.0 - 0.35 * blocker_w)
    from .geometry import point_along_polyline

    bx, by, byaw = point_along_polyline(lanes[0].centerline, s_block)
    nx, ny = -math.sin(byaw), math.cos(byaw)
    b_pose = Pose(float(bx + d_block * nx), float(by + d_block * ny), float(byaw))
    blocker = AgentTrack("agent_0", blocker_l, blocker_w, [b_pose] * n)

    # ego nudges left around the blocker and returns to its lane
    inner_edge = d_block + 0.5 * blocker_w
    delta = inner_edge + 0.5 * cfg.vehicle_width + rng.uniform(0.5, 0.8)
    speeds = _cruise_speeds(rng, n, v0, ripple=0.05)
    st = _stations(speeds) + 10.0
    span = rng.uniform(26.0, 34.0)
    u = np.clip((st - (s_block - 0.5 * span)) / span, 0.0, 1.0)
    lateral = delta * 0.5 * (1.0 - np.cos(2.0 * math.pi * u))
    slow = 1.0 - 0.25 * np.sin(math.pi * u) ** 2
    st = _stations(speeds * slow) + 10.0
    u = np.clip((st - (s_block - 0.5 * span)) / span, 0.0, 1.0)
    lateral = delta * 0.5 * (1.0 - np.cos(2.0 * math.pi * u))
    base = _interp_path(center, st)
    tangents = np.gradient(base, axis=0)
    tangents /= np.maximum(np.linalg.norm(tangents, axis=1, keepdims=True), 1e-12)
    normals = np.stack([-tangents[:, 1], tangents[:, 0]], axis=1)
    ego_xy = base + lateral[:, None] * normals
    ego = AgentTrack("ego", cfg.vehicle_length, cfg.vehicle_width, _poses_from_xy(ego_xy))

    agents = [blocker]
    n_extra = (cfg.n_agents - 1) if cfg.n_agents is not None else int(rng.integers(0, 2))
    for k in range(max(0, n_extra)):
        # distant traffic in the left lane, far ahead of the nudge window
        xy = _interp_path(
            lanes[1].centerline,
            _stations(np.full(n, v0 * rng.uniform(0.9, 1.2))) + s_block + rng.uniform(40.0, 80.0),
        )
        agents.append(_vehicle(rng, cfg, f"agent_{k + 1}", xy))
    if cfg.n_agents == 0:
        agents = [blocker]  # the category requires the blocking agent

    road = RoadMap(lanes=lanes, drivable_polygons=[drivable], route_lanes=["lane_0"])
    return Scenario(road, ego, agents, n, Category.FLEXIBILITY, seed)


# --- world remap and validation ----------------------------------------------

def _remap_xy(xy: np.ndarray, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    return xy @ R.T + t


def _rigid_remap(s: Scenario, angle: float, offset: np.ndarray) -> Scenario:
    """Rotate+translate every world coordinate; scenario semantics unchanged."""
    R = rot2d(angle)
    t = np.asarray(offset, dtype=float)

    def remap_track(track: AgentTrack) -> AgentTrack:
        xy = np.array([[p.x, p.y] for p in track.poses]) @ R.T + t
        poses = [
            Pose(float(x), float(y), p.yaw + angle) for (x, y), p in zip(xy, track.poses)
        ]
        return replace(track, poses=poses)

    lanes = [replace(l, centerline=_remap_xy(l.centerline, R, t)) for l in s.map.lanes]
    road = RoadMap(
        lanes=lanes,
        drivable_polygons=[_remap_xy(p, R, t) for p in s.map.drivable_polygons],
        crosswalks=[_remap_xy(p, R, t) for p in s.map.crosswalks],
        traffic_lights=[
            replace(tl, position=tuple(_remap_xy(np.asarray(tl.position, float), R, t)))
            for tl in s.map.traffic_lights
        ],
        route_lanes=list(s.map.route_lanes),
    )
    return Scenario(road, remap_track(s.ego), [remap_track(a) for a in s.agents], s.n_frames, s.category, s.seed)


def _validate_world(s: Scenario) -> None:
    """Generator self-checks: ego on-road and free of collisions at every frame."""
    from .geometry import points_in_polygon

    pos = np.array([[p.x, p.y] for p in s.ego.poses])
    inside = np.zeros(len(pos), dtype=bool)
    for poly in s.map.drivable_polygons:
        inside |= points_in_polygon(pos, poly)
    if not inside.all():
        raise AssertionError(f"generated ego leaves the drivable area at frame {int(np.argmin(inside))}")
    for a in s.agents:
        apos = np.array([[p.x, p.y] for p in a.poses])
        near = np.abs(apos - pos).sum(axis=1) < 30.0
        for f in np.nonzero(near)[0][::2]:
            ep, ap = s.ego.pose(int(f)), a.pose(int(f))
            ego_box = box_corners(ep.x, ep.y, ep.yaw, s.ego.length, s.ego.width)
            if boxes_intersect(ego_box, box_corners(ap.x, ap.y, ap.yaw, a.length, a.width)):
                raise AssertionError(f"generated ego collides with {a.id} at frame {f}")
