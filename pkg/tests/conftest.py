import math

import numpy as np
import pytest

from heatplan.scenario import AgentTrack, Category, Lane, Pose, RoadMap, Scenario


def make_wide_scenario(
    n_frames: int = 120,
    speed: float = 5.0,
    agents: list[AgentTrack] | None = None,
    half_extent: float = 120.0,
) -> Scenario:
    """A single straight lane crossing a huge drivable square: room for any
    kernel support, used by the adaptive-sigma and wide-road tests."""
    xs = np.arange(n_frames) * 0.1 * speed
    poses = [Pose(float(x), 0.0, 0.0) for x in xs]
    lane = Lane("main", 3.5, np.array([[-half_extent, 0.0], [half_extent * 2, 0.0]]))
    drivable = np.array(
        [
            [-half_extent, -half_extent],
            [half_extent * 2, -half_extent],
            [half_extent * 2, half_extent],
            [-half_extent, half_extent],
        ]
    )
    road = RoadMap(lanes=[lane], drivable_polygons=[drivable], route_lanes=["main"])
    ego = AgentTrack("ego", 4.5, 2.0, poses)
    return Scenario(road, ego, agents or [], n_frames, Category.LANE_FOLLOWING, seed=0)


def static_agent(agent_id: str, x: float, y: float, yaw: float, n_frames: int,
                 length: float = 4.5, width: float = 2.0) -> AgentTrack:
    return AgentTrack(agent_id, length, width, [Pose(x, y, yaw)] * n_frames)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
