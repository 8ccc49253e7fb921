"""Scenario domain types, turn classification and scenario file I/O.

A scenario is a fully scripted world log: a road map, the expert ego track
and the tracks of every other traffic agent, sampled on a global 10 Hz
frame clock. Scenario files are JSON documents (one scenario per file,
``format_version`` 1); angles are radians, lengths meters.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvariantError, ScenarioFormatError
from .geometry import corridor_polygon, wrap_angle

FRAME_HZ = 10
FRAME_DT = 1.0 / FRAME_HZ
FORMAT_VERSION = 1


class Category(str, enum.Enum):
    """The four closed-loop evaluation scenario families."""

    LANE_FOLLOWING = "lane_following"
    LANE_CHANGING = "lane_changing"
    INTERSECTION = "intersection"
    FLEXIBILITY = "flexibility"


class TurnCategory(str, enum.Enum):
    STRAIGHT = "straight"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"


@dataclass(frozen=True)
class Pose:
    """Planar pose; yaw is normalized to (-pi, pi] on construction."""

    x: float
    y: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass
class Trajectory:
    """Ordered pose sequence sampled every `dt` seconds."""

    poses: list[Pose]
    dt: float = FRAME_DT

    def __post_init__(self):
        if not self.poses:
            raise InvariantError("trajectory must contain at least one pose")
        if self.dt <= 0:
            raise InvariantError("trajectory dt must be positive")

    def __len__(self) -> int:
        return len(self.poses)

    def as_array(self) -> np.ndarray:
        return np.array([[p.x, p.y, p.yaw] for p in self.poses])


@dataclass
class AgentTrack:
    """One traffic participant with an oriented-box footprint and a scripted track."""

    id: str
    length: float
    width: float
    poses: list[Pose]
    kind: str = "vehicle"  # "vehicle" | "pedestrian"

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise InvariantError(f"agent {self.id}: footprint dimensions must be positive")
        if self.kind not in ("vehicle", "pedestrian"):
            raise InvariantError(f"agent {self.id}: unknown kind {self.kind!r}")

    def pose(self, frame: int) -> Pose:
        return self.poses[frame]

    def speed(self, frame: int, dt: float = FRAME_DT) -> float:
        """Finite-difference speed at a frame, m/s."""
        j = max(1, min(frame, len(self.poses) - 1))
        a, b = self.poses[j - 1], self.poses[j]
        return math.dist((a.x, a.y), (b.x, b.y)) / dt


@dataclass
class TrafficLight:
    position: tuple[float, float]
    controlled_lanes: list[str]
    states: str  # one char per frame, 'r' or 'g'

    def is_red(self, frame: int) -> bool:
        return self.states[frame] == "r"


@dataclass
class Lane:
    id: str
    width: float
    centerline: np.ndarray  # (K, 2)

    def corridor(self) -> np.ndarray:
        return corridor_polygon(self.centerline, self.width)


@dataclass
class RoadMap:
    lanes: list[Lane]
    drivable_polygons: list[np.ndarray]
    crosswalks: list[np.ndarray] = field(default_factory=list)
    traffic_lights: list[TrafficLight] = field(default_factory=list)
    route_lanes: list[str] = field(default_factory=list)

    def __post_init__(self):
        ids = {l.id for l in self.lanes}
        for rid in self.route_lanes:
            if rid not in ids:
                raise InvariantError(f"route lane {rid!r} not present in lanes")
        self._corridors: dict[str, np.ndarray] = {}

    def lane_by_id(self, lane_id: str) -> Lane:
        for lane in self.lanes:
            if lane.id == lane_id:
                return lane
        raise KeyError(lane_id)

    def corridor(self, lane_id: str) -> np.ndarray:
        if lane_id not in self._corridors:
            self._corridors[lane_id] = self.lane_by_id(lane_id).corridor()
        return self._corridors[lane_id]

    def route_centerline(self) -> np.ndarray:
        return np.vstack([self.lane_by_id(lid).centerline for lid in self.route_lanes])


@dataclass
class Scenario:
    map: RoadMap
    ego: AgentTrack
    agents: list[AgentTrack]
    n_frames: int
    category: Category
    seed: int

    def __post_init__(self):
        if self.n_frames <= 0:
            raise InvariantError("n_frames must be positive")
        if any(a.id == self.ego.id for a in self.agents):
            raise InvariantError("ego id must not appear in agents")
        for track in [self.ego, *self.agents]:
            if len(track.poses) != self.n_frames:
                raise InvariantError(
                    f"track {track.id!r} has {len(track.poses)} poses, expected {self.n_frames}"
                )
        for light in self.map.traffic_lights:
            if len(light.states) != self.n_frames:
                raise InvariantError("traffic light state string length must equal n_frames")
            if set(light.states) - {"r", "g"}:
                raise InvariantError("traffic light states must be 'r' or 'g'")


def classify_turn(traj: Trajectory, threshold: float = 0.4) -> TurnCategory:
    """Classify a trajectory by its maximum signed yaw shift from the first pose.

    A shift beyond +threshold is a left turn, beyond -threshold a right turn;
    when both extremes exceed the threshold the larger magnitude wins (left
    only on a strictly larger left extremum).
    """
    yaw0 = traj.poses[0].yaw
    shifts = wrap_angle(np.array([p.yaw for p in traj.poses]) - yaw0)
    left = float(np.max(shifts))
    right = float(-np.min(shifts))
    if left <= threshold and right <= threshold:
        return TurnCategory.STRAIGHT
    return TurnCategory.TURN_LEFT if left > right else TurnCategory.TURN_RIGHT


# --- serialization -----------------------------------------------------------

def _pose_to_list(p: Pose) -> list[float]:
    return [p.x, p.y, p.yaw]


def _track_to_dict(t: AgentTrack) -> dict:
    return {
        "id": t.id,
        "kind": t.kind,
        "length": t.length,
        "width": t.width,
        "poses": [_pose_to_list(p) for p in t.poses],
    }


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "category": s.category.value,
        "seed": s.seed,
        "n_frames": s.n_frames,
        "map": {
            "lanes": [
                {"id": l.id, "width": l.width, "centerline": l.centerline.tolist()}
                for l in s.map.lanes
            ],
            "drivable_polygons": [p.tolist() for p in s.map.drivable_polygons],
            "crosswalks": [p.tolist() for p in s.map.crosswalks],
            "traffic_lights": [
                {
                    "position": list(tl.position),
                    "controlled_lanes": tl.controlled_lanes,
                    "states": tl.states,
                }
                for tl in s.map.traffic_lights
            ],
            "route_lanes": s.map.route_lanes,
        },
        "ego": _track_to_dict(s.ego),
        "agents": [_track_to_dict(a) for a in s.agents],
    }


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ScenarioFormatError(f"missing key {key!r} in {where}")
    return d[key]


def _track_from_dict(d: dict, where: str) -> AgentTrack:
    poses = [Pose(*p) for p in _require(d, "poses", where)]
    return AgentTrack(
        id=str(_require(d, "id", where)),
        kind=d.get("kind", "vehicle"),
        length=float(_require(d, "length", where)),
        width=float(_require(d, "width", where)),
        poses=poses,
    )


def scenario_from_dict(doc: dict) -> Scenario:
    version = _require(doc, "format_version", "scenario")
    if version != FORMAT_VERSION:
        raise ScenarioFormatError(
            f"unsupported format_version {version!r}, expected {FORMAT_VERSION}"
        )
    m = _require(doc, "map", "scenario")
    lanes = [
        Lane(
            id=str(_require(l, "id", "map.lanes")),
            width=float(_require(l, "width", "map.lanes")),
            centerline=np.asarray(_require(l, "centerline", "map.lanes"), dtype=float),
        )
        for l in _require(m, "lanes", "map")
    ]
    road = RoadMap(
        lanes=lanes,
        drivable_polygons=[
            np.asarray(p, dtype=float) for p in _require(m, "drivable_polygons", "map")
        ],
        crosswalks=[np.asarray(p, dtype=float) for p in m.get("crosswalks", [])],
        traffic_lights=[
            TrafficLight(
                position=tuple(_require(tl, "position", "map.traffic_lights")),
                controlled_lanes=list(_require(tl, "controlled_lanes", "map.traffic_lights")),
                states=str(_require(tl, "states", "map.traffic_lights")),
            )
            for tl in m.get("traffic_lights", [])
        ],
        route_lanes=list(_require(m, "route_lanes", "map")),
    )
    try:
        return Scenario(
            map=road,
            ego=_track_from_dict(_require(doc, "ego", "scenario"), "ego"),
            agents=[_track_from_dict(a, "agents") for a in _require(doc, "agents", "scenario")],
            n_frames=int(_require(doc, "n_frames", "scenario")),
            category=Category(_require(doc, "category", "scenario")),
            seed=int(_require(doc, "seed", "scenario")),
        )
    except ValueError as exc:
        if isinstance(exc, (ScenarioFormatError, InvariantError)):
            raise
        raise ScenarioFormatError(str(exc)) from exc


def scenario_to_json(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), sort_keys=True, separators=(",", ":"))


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(scenario_to_json(s))


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioFormatError("scenario document must be a JSON object")
    return scenario_from_dict(doc)


def scenarios_equal(a: Scenario, b: Scenario) -> bool:
    """Structural equality via the canonical JSON form."""
    return scenario_to_json(a) == scenario_to_json(b)
