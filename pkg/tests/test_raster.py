import math

import numpy as np
import pytest
from PIL import Image

from heatplan.errors import DimensionError
from heatplan.generate import GeneratorConfig, generate_scenario, _rigid_remap
from heatplan.raster import RasterConfig, channel_names, make_transform, rasterize, render_overlay
from heatplan.scenario import Category, Pose

CFG = RasterConfig()


def test_transform_anchor_and_scale():
    tf = make_transform(Pose(12.0, -7.0, 1.1), CFG)
    assert np.allclose(tf.world_to_pixel(np.array([12.0, -7.0])), [32.0, 64.0])
    ahead = np.array([12.0 + math.cos(1.1), -7.0 + math.sin(1.1)])
    assert np.allclose(tf.world_to_pixel(ahead), [34.0, 64.0])


def test_transform_inverse_roundtrip(rng):
    tf = make_transform(Pose(3.0, 4.0, -2.2), CFG, extra_rotation=0.3)
    pts = rng.uniform(-500, 500, (100, 2))
    back = tf.pixel_to_world(tf.world_to_pixel(pts))
    assert np.abs(back - pts).max() < 1e-9


def test_transform_extra_rotation_direction():
    rho = 0.4
    tf = make_transform(Pose(0.0, 0.0, 0.0), CFG, extra_rotation=rho)
    p = tf.world_to_pixel(np.array([1.0, 0.0]))  # 1 m along heading
    d = p - np.array(CFG.anchor_px)
    angle = math.atan2(d[1], d[0])
    assert angle == pytest.approx(rho)
    assert np.hypot(*d) == pytest.approx(2.0)  # 1 m = 2 px


def test_spatial_extent_defaults():
    tf = make_transform(Pose(0.0, 0.0, 0.0), CFG)
    # forward pixel budget: 96 px * 0.5 m = 48 m ahead, 32 px = 16 m back,
    # 64 px = 32 m each side
    corners = tf.pixel_to_world(np.array([[0.0, 64.0], [127.0, 64.0], [32.0, 0.0], [32.0, 127.0]]))
    assert corners[0][0] == pytest.approx(-16.0)
    assert corners[1][0] == pytest.approx(47.5)
    assert abs(corners[2][1]) == pytest.approx(32.0)
    assert abs(corners[3][1]) == pytest.approx(31.5)


def test_raster_shapes_and_ranges():
    s = generate_scenario(Category.INTERSECTION, 2)
    r = rasterize(s, 30, CFG)
    assert r.channels.shape == (CFG.n_channels, 128, 128)
    assert len(channel_names(CFG.n_history)) == CFG.n_channels
    assert r.channels.min() >= 0.0 and r.channels.max() <= 1.0
    nav = r.channels[CFG.n_channels - 1]
    assert set(np.unique(nav)) <= {0.0, 1.0}


def test_no_agents_channels_zero():
    s = generate_scenario(Category.LANE_FOLLOWING, 4, GeneratorConfig(n_agents=0))
    r = rasterize(s, 20, CFG)
    nh = CFG.n_history
    assert r.channels[nh + 1 : 2 * (nh + 1)].sum() == 0.0
    assert r.channels[0].sum() > 0.0


def test_determinism_bit_identical():
    s = generate_scenario(Category.LANE_CHANGING, 6)
    a = rasterize(s, 40, CFG)
    b = rasterize(s, 40, CFG)
    assert np.array_equal(a.channels, b.channels)


def test_ego_box_area():
    s = generate_scenario(Category.LANE_FOLLOWING, 8)
    r = rasterize(s, 25, CFG)
    expected = s.ego.length * s.ego.width / CFG.resolution**2
    got = float(np.count_nonzero(r.channels[0]))
    assert abs(got - expected) <= 0.2 * expected


def test_history_fading_intensities():
    s = generate_scenario(Category.LANE_FOLLOWING, 8)
    r = rasterize(s, 25, CFG)
    nh = CFG.n_history
    for k in range(nh + 1):
        assert r.channels[k].max() == pytest.approx((nh + 1 - k) / (nh + 1))


def test_equivariance_under_rigid_world_remap():
    s = generate_scenario(Category.INTERSECTION, 3)
    s2 = _rigid_remap(s, angle=0.83, offset=np.array([41.7, -99.2]))
    a = rasterize(s, 50, CFG)
    b = rasterize(s2, 50, CFG)
    assert np.array_equal(a.channels, b.channels)


def test_frame_out_of_range():
    s = generate_scenario(Category.LANE_FOLLOWING, 1)
    with pytest.raises(IndexError):
        rasterize(s, 2, CFG)  # below n_history
    with pytest.raises(IndexError):
        rasterize(s, s.n_frames, CFG)


def test_overlay_uniform_and_peak(tmp_path):
    s = generate_scenario(Category.LANE_FOLLOWING, 9)
    r = rasterize(s, 30, CFG)
    uniform = np.full((128, 128), 0.5)
    path = tmp_path / "u.png"
    render_overlay(uniform, r, path)
    img = np.asarray(Image.open(path))
    assert img.shape == (128, 128)
    lanes = r.channels[CFG.n_channels - 4] > 0
    assert np.all(img[lanes] == img[lanes][0])  # uniform mid-brightness on the road
    assert 100 <= int(img[lanes][0]) <= 160

    peaked = np.zeros((128, 128))
    peaked[40, 64] = 1.0
    path2 = tmp_path / "p.png"
    render_overlay(peaked, r, path2)
    img2 = np.asarray(Image.open(path2))
    assert np.unravel_index(np.argmax(img2), img2.shape) == (40, 64)

    render_overlay(peaked, r, tmp_path / "p2.png")
    assert (tmp_path / "p2.png").read_bytes() == path2.read_bytes()  # deterministic


def test_overlay_shape_mismatch(tmp_path):
    s = generate_scenario(Category.LANE_FOLLOWING, 9)
    r = rasterize(s, 30, CFG)
    with pytest.raises(DimensionError):
        render_overlay(np.zeros((64, 64)), r, tmp_path / "x.png")
