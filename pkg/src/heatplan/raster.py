"""Bird's-eye-view rasterization of scenario frames.

Conventions (pinned by tests):
  * pixel (row r, col c) covers the unit square centered at continuous pixel
    coordinates (x=c, y=r); transforms return (x, y) pixel coordinates,
    arrays are indexed [channel, row, col];
  * the ego is anchored at fractional image position (0.25, 0.5) --
    (x=32, y=64) at 128x128 -- heading along +x, left side toward smaller
    rows, 0.5 m per pixel at defaults;
  * channel layout: ego history 0..n, agent history 0..n, lanes, crosswalks,
    red-light lanes, navigation mask; history offset k is drawn at intensity
    (n+1-k)/(n+1), the current frame brightest;
  * box and polygon coverage is decided by center-of-pixel containment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ConfigError, DimensionError
from .geometry import box_corners, clip_polygon, resample_polyline, rot2d
from .scenario import Pose, Scenario


@dataclass(frozen=True)
class RasterConfig:
    height: int = 128
    width: int = 128
    resolution: float = 0.5  # meters per pixel
    ego_anchor: tuple[float, float] = (0.25, 0.5)  # fractional (x, y)
    n_history: int = 5
    orientation_noise: float = math.pi / 6.0  # half-range, augmentation only

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ConfigError("raster size must be positive")
        if self.resolution <= 0:
            raise ConfigError("resolution must be positive")
        if not (0.0 <= self.ego_anchor[0] <= 1.0 and 0.0 <= self.ego_anchor[1] <= 1.0):
            raise ConfigError("ego_anchor components must lie in [0, 1]")

    @property
    def n_channels(self) -> int:
        return 2 * (self.n_history + 1) + 4

    @property
    def anchor_px(self) -> tuple[float, float]:
        return (self.ego_anchor[0] * self.width, self.ego_anchor[1] * self.height)


def channel_names(n_history: int) -> list[str]:
    return (
        [f"ego_h{k}" for k in range(n_history + 1)]
        + [f"agents_h{k}" for k in range(n_history + 1)]
        + ["lanes", "crosswalks", "red_light", "route_mask"]
    )


@dataclass(frozen=True)
class RasterTransform:
    """Affine world -> pixel map for one ego pose and raster config."""

    matrix: np.ndarray  # (2, 2)
    offset: np.ndarray  # (2,)
    resolution: float
    extra_rotation: float
    ego_pose: Pose
    anchor_px: tuple[float, float]

    def world_to_pixel(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.matrix.T + self.offset

    def pixel_to_world(self, pixels) -> np.ndarray:
        inv = np.linalg.inv(self.matrix)
        return (np.asarray(pixels, dtype=float) - self.offset) @ inv.T

    def pixel_to_ego(self, px: float, py: float) -> tuple[float, float]:
        """Pixel coordinates to (forward, left) meters in the true ego frame."""
        f_r = (px - self.anchor_px[0]) * self.resolution
        l_r = -(py - self.anchor_px[1]) * self.resolution
        c, s = math.cos(self.extra_rotation), math.sin(self.extra_rotation)
        return c * f_r - s * l_r, s * f_r + c * l_r


def make_transform(ego_pose: Pose, config: RasterConfig, extra_rotation: float = 0.0) -> RasterTransform:
    """Transform placing the ego at the anchor, heading along +x rotated by
    `extra_rotation` (pixel y grows to the ego's right)."""
    rot = rot2d(-(ego_pose.yaw + extra_rotation))
    flip = np.array([[1.0, 0.0], [0.0, -1.0]])
    m = (flip @ rot) / config.resolution
    anchor = np.array(config.anchor_px)
    offset = anchor - m @ np.array([ego_pose.x, ego_pose.y])
    return RasterTransform(
        matrix=m,
        offset=offset,
        resolution=config.resolution,
        extra_rotation=extra_rotation,
        ego_pose=ego_pose,
        anchor_px=config.anchor_px,
    )


@dataclass
class BevRaster:
    channels: np.ndarray  # (C, H, W) float32 in [0, 1]
    transform: RasterTransform
    frame: int

    @property
    def height(self) -> int:
        return self.channels.shape[1]

    @property
    def width(self) -> int:
        return self.channels.shape[2]


# --- pixel fills --------------------------------------------------------------

def _paint_convex(channel: np.ndarray, pts: np.ndarray, value: float) -> None:
    """Max-composite `value` over pixel centers inside a convex polygon."""
    h, w = channel.shape
    c0 = max(0, int(math.ceil(pts[:, 0].min())))
    c1 = min(w - 1, int(math.floor(pts[:, 0].max())))
    r0 = max(0, int(math.ceil(pts[:, 1].min())))
    r1 = min(h - 1, int(math.floor(pts[:, 1].max())))
    if c0 > c1 or r0 > r1:
        return
    # orient CCW so every inward half-plane test reads cross >= 0
    x, y = pts[:, 0], pts[:, 1]
    if 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) < 0:
        pts = pts[::-1]
    xs = np.arange(c0, c1 + 1, dtype=float)
    ys = np.arange(r0, r1 + 1, dtype=float)[:, None]
    inside = np.ones((r1 - r0 + 1, c1 - c0 + 1), dtype=bool)
    for i in range(len(pts)):
        ax, ay = pts[i]
        bx, by = pts[(i + 1) % len(pts)]
        inside &= (bx - ax) * (ys - ay) - (by - ay) * (xs - ax) >= 0.0
    region = channel[r0 : r1 + 1, c0 : c1 + 1]
    np.maximum(region, np.where(inside, np.float32(value), np.float32(0.0)), out=region)


def _paint_polygon(channel: np.ndarray, pts: np.ndarray, value: float) -> None:
    """Max-composite over a simple polygon via the even-odd rule (clipped first)."""
    h, w = channel.shape
    if (
        pts[:, 0].max() < -0.5
        or pts[:, 0].min() > w - 0.5
        or pts[:, 1].max() < -0.5
        or pts[:, 1].min() > h - 0.5
    ):
        return
    pts = clip_polygon(pts, -0.5, -0.5, w - 0.5, h - 0.5)
    if len(pts) < 3:
        return
    c0 = max(0, int(math.ceil(pts[:, 0].min())))
    c1 = min(w - 1, int(math.floor(pts[:, 0].max())))
    r0 = max(0, int(math.ceil(pts[:, 1].min())))
    r1 = min(h - 1, int(math.floor(pts[:, 1].max())))
    if c0 > c1 or r0 > r1:
        return
    xs = np.arange(c0, c1 + 1, dtype=float)
    ys = np.arange(r0, r1 + 1, dtype=float)[:, None]
    x1, y1 = pts[:, 0], pts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    keep = y1 != y2
    x1, y1, x2, y2 = x1[keep], y1[keep], x2[keep], y2[keep]
    if len(x1) == 0:
        return
    # vectorized crossing-number over all edges at once: (E, ny, nx)
    crosses = (y1[:, None, None] > ys) != (y2[:, None, None] > ys)
    x_int = x1[:, None, None] + (ys - y1[:, None, None]) * (
        (x2 - x1) / (y2 - y1)
    )[:, None, None]
    cnt = (crosses & (xs < x_int)).sum(axis=0)
    region = channel[r0 : r1 + 1, c0 : c1 + 1]
    np.maximum(region, np.where(cnt % 2 == 1, np.float32(value), np.float32(0.0)), out=region)


# --- rasterization -------------------------------------------------------------

_RENDER_SPACING = 4.0  # corridor resample spacing for fills, meters


def _render_corridors(scenario: Scenario) -> dict[str, np.ndarray]:
    cache = getattr(scenario.map, "_render_corridors", None)
    if cache is None:
        from .geometry import corridor_polygon

        cache = {
            l.id: corridor_polygon(resample_polyline(l.centerline, _RENDER_SPACING), l.width)
            for l in scenario.map.lanes
        }
        scenario.map._render_corridors = cache
    return cache


def rasterize(
    s: Scenario,
    frame: int,
    config: RasterConfig | None = None,
    extra_rotation: float = 0.0,
    ego_history: list[Pose] | None = None,
) -> BevRaster:
    """Render one frame into the multi-channel BEV tensor.

    `ego_history` optionally overrides the logged ego poses at history
    offsets 0..n_history (0 = current frame); the closed-loop simulator uses
    it to render the simulated ego instead of the recorded one.
    """
    config = config or RasterConfig()
    nh = config.n_history
    if frame < nh or frame >= s.n_frames:
        raise IndexError(f"frame {frame} outside [{nh}, {s.n_frames})")
    if ego_history is not None and len(ego_history) != nh + 1:
        raise DimensionError(f"ego_history must hold {nh + 1} poses")

    def ego_at(k: int) -> Pose:
        return ego_history[k] if ego_history is not None else s.ego.pose(frame - k)

    tf = make_transform(ego_at(0), config, extra_rotation)
    img = np.zeros((config.n_channels, config.height, config.width), dtype=np.float32)

    view_reach = (config.height + config.width) * config.resolution  # generous cull radius
    ex, ey = ego_at(0).x, ego_at(0).y
    for k in range(nh + 1):
        value = (nh + 1 - k) / (nh + 1)
        p = ego_at(k)
        _paint_convex(img[k], tf.world_to_pixel(box_corners(p.x, p.y, p.yaw, s.ego.length, s.ego.width)), value)
        ch = img[nh + 1 + k]
        for a in s.agents:
            ap = a.pose(frame - k)
            if abs(ap.x - ex) + abs(ap.y - ey) > view_reach:
                continue
            _paint_convex(ch, tf.world_to_pixel(box_corners(ap.x, ap.y, ap.yaw, a.length, a.width)), value)

    corridors = _render_corridors(s)
    lanes_ch = 2 * (nh + 1)
    for lane in s.map.lanes:
        _paint_polygon(img[lanes_ch], tf.world_to_pixel(corridors[lane.id]), 1.0)
    for cw in s.map.crosswalks:
        _paint_polygon(img[lanes_ch + 1], tf.world_to_pixel(cw), 1.0)
    for light in s.map.traffic_lights:
        if light.is_red(frame):
            for lid in light.controlled_lanes:
                _paint_polygon(img[lanes_ch + 2], tf.world_to_pixel(corridors[lid]), 1.0)
    for lid in s.map.route_lanes:
        _paint_polygon(img[lanes_ch + 3], tf.world_to_pixel(corridors[lid]), 1.0)

    return BevRaster(channels=img, transform=tf, frame=frame)


def drivable_mask(s: Scenario, tf: RasterTransform, height: int, width: int) -> np.ndarray:
    """Boolean (H, W) mask of pixels whose centers lie on the drivable area."""
    mask = np.zeros((height, width), dtype=np.float32)
    for poly in s.map.drivable_polygons:
        _paint_polygon(mask, tf.world_to_pixel(poly), 1.0)
    return mask > 0.5


def render_overlay(heatmap: np.ndarray, raster: BevRaster, path) -> None:
    """Write a lossless PNG of the heatmap blended as brightness over the map."""
    h = np.asarray(heatmap, dtype=float)
    if h.shape != raster.channels.shape[1:]:
        raise DimensionError(
            f"heatmap shape {h.shape} does not match raster {raster.channels.shape[1:]}"
        )
    c = raster.channels.shape[0]
    base = np.maximum(raster.channels[c - 4], np.maximum(raster.channels[c - 3], raster.channels[c - 1]))
    brightness = np.clip(0.2 * base + 0.8 * h, 0.0, 1.0)
    Image.fromarray(np.round(brightness * 255.0).astype(np.uint8), mode="L").save(path, format="PNG")
