import math

import numpy as np
import pytest

from heatplan.errors import DimensionError, InfeasibleGoalError
from heatplan.heatmap import PatchRegion
from heatplan.loss import hourglass_loss
from heatplan.model import (
    AdamState,
    NetConfig,
    PlannerNet,
    TrainBatch,
    adam_update,
    argmax_goal,
    kinematic_fallback,
    load_checkpoint,
    save_checkpoint,
    train_step,
)
from heatplan.raster import RasterConfig

TOY = NetConfig(in_channels=4, enc_widths=(4, 6, 8), tail_width=4, traj_hidden=8, dtype="float64")


def _toy_net(seed=3, randomize_heads=True):
    net = PlannerNet(TOY, seed=seed)
    if randomize_heads:
        r = np.random.default_rng(100 + seed)
        net.params["head_w"] = r.normal(0, 0.3, net.params["head_w"].shape)
        net.params["fc2_w"] = r.normal(0, 0.3, net.params["fc2_w"].shape)
    return net


def test_forward_shapes_and_range(rng):
    net = PlannerNet(NetConfig(), seed=0)
    x = rng.random((2, 16, 128, 128)).astype(np.float32)
    heat, emb, _ = net.forward(x)
    assert heat.shape == (2, 128, 128)
    assert emb.shape == (2, NetConfig().embedding_dim)
    assert np.all(heat > 0.0) and np.all(heat < 1.0)


def test_zero_initialized_head_gives_uniform_half(rng):
    net = PlannerNet(NetConfig(), seed=1)  # head starts at zero
    x = rng.random((1, 16, 64, 64)).astype(np.float32)
    heat, _, _ = net.forward(x)
    assert np.all(heat == 0.5)


def test_bad_input_shapes(rng):
    net = PlannerNet(NetConfig(), seed=0)
    with pytest.raises(DimensionError):
        net.forward(rng.random((1, 3, 64, 64)))
    with pytest.raises(DimensionError):
        net.forward(rng.random((1, 16, 60, 60)))


def test_end_to_end_gradient_toy(rng):
    """Full two-stage backprop vs central finite differences, 32 probes."""
    net = _toy_net()
    x = rng.normal(size=(2, 4, 16, 16))
    goal = rng.uniform(0, 1, (2, 2))
    speed = rng.uniform(0, 8, 2)
    gt = rng.uniform(0, 1, (2, 16, 16))
    wts = np.where(rng.random((2, 16, 16)) < 0.5, 0.6, 1.0)
    tlab = rng.normal(0, 2, (2, 20, 3))
    patch = PatchRegion.centered(16, 16, 0.5)

    def total():
        heat, emb, cache = net.forward(x)
        hl = sum(hourglass_loss(heat[i], gt[i], wts[i], patch).value for i in range(2))
        tout, tcache = net.traj_forward(goal, emb, speed)
        resid = tout - tlab
        return hl + float(np.sum(resid * resid) / 60), heat, cache, tcache, resid

    val, heat, cache, tcache, resid = total()
    d_heat = np.stack([hourglass_loss(heat[i], gt[i], wts[i], patch).gradient for i in range(2)])
    t_grads, d_emb = net.traj_backward(tcache, 2 * resid / 60)
    grads = net.backward(cache, d_heat, d_emb)
    grads.update(t_grads)

    keys = sorted(net.params)
    worst = 0.0
    probe_rng = np.random.default_rng(11)
    for i in range(32):
        k = keys[i % len(keys)]
        p = net.params[k]
        idx = tuple(int(probe_rng.integers(0, s)) for s in p.shape)
        eps = 1e-6
        old = p[idx]
        p[idx] = old + eps
        up = total()[0]
        p[idx] = old - eps
        dn = total()[0]
        p[idx] = old
        num = (up - dn) / (2 * eps)
        rel = abs(num - grads[k][idx]) / max(abs(num), abs(grads[k][idx]), 1e-8)
        worst = max(worst, rel)
    assert worst < 1e-3


def test_translation_consistency_at_net_stride(rng):
    """Shifting the input by the total downsample factor (8 px) shifts the
    pre-sigmoid output by the same amount on an interior crop."""
    net = _toy_net(seed=5)
    x = np.zeros((1, 4, 64, 64))
    x[0, :, 20:28, 20:28] = rng.normal(size=(4, 8, 8))
    z1 = net.presigmoid(x)
    x2 = np.roll(x, (8, 8), axis=(2, 3))
    z2 = net.presigmoid(x2)
    m = 16
    assert np.allclose(z2[0, m + 8 : 56, m + 8 : 56], z1[0, m : 56 - 8, m : 56 - 8], atol=1e-10)


# --- argmax goal -----------------------------------------------------------------

def test_argmax_single_peak():
    h = np.zeros((128, 128))
    h[40, 64] = 1.0
    patch = PatchRegion.centered(128, 128, 0.5)
    assert argmax_goal(h, patch) == (40, 64)


def test_argmax_tiebreak_top_left():
    h = np.full((128, 128), 0.7)
    patch = PatchRegion.centered(128, 128, 0.5)
    assert argmax_goal(h, patch) == (patch.row0, patch.col0)


def test_argmax_monotone_transform_invariance(rng):
    patch = PatchRegion.centered(64, 64, 0.5)
    for _ in range(20):
        h = rng.random((64, 64))
        a = argmax_goal(h, patch)
        b = argmax_goal(np.exp(3.0 * h) - 0.5, patch)  # strictly monotone
        assert a == b


def test_argmax_ignores_outside_patch():
    h = np.zeros((64, 64))
    h[0, 0] = 5.0  # outside patch
    h[20, 30] = 1.0
    patch = PatchRegion.centered(64, 64, 0.5)
    assert argmax_goal(h, patch) == (20, 30)


# --- trajectory head -------------------------------------------------------------

def test_trajectory_head_pose_count(rng):
    net = PlannerNet(NetConfig(), seed=2)
    emb = rng.random(NetConfig().embedding_dim)
    traj = net.predict_trajectory((40, 64), emb, 5.0, (128, 128))
    assert len(traj.poses) == 20
    assert traj.dt == pytest.approx(0.1)


def test_zero_weight_head_outputs_origin(rng):
    net = PlannerNet(NetConfig(), seed=2)
    net.params["fc2_w"][:] = 0.0
    net.params["fc2_b"][:] = 0.0
    traj = net.predict_trajectory((40, 64), rng.random(32), 5.0, (128, 128))
    for p in traj.poses:
        assert (p.x, p.y, p.yaw) == (0.0, 0.0, 0.0)


# --- kinematic fallback ------------------------------------------------------------

CFG128 = RasterConfig()


def test_fallback_straight_constant_speed():
    speed = 5.0
    goal = (64, 32 + int(speed * 2.0 / 0.5))  # 2 s ahead at current speed
    traj = kinematic_fallback(goal, speed, CFG128)
    xs = np.array([p.x for p in traj.poses])
    assert np.allclose(np.diff(xs, prepend=0.0), speed * 0.1, atol=1e-9)
    assert all(p.y == 0.0 and p.yaw == 0.0 for p in traj.poses)


def test_fallback_goal_at_ego_full_stop():
    traj = kinematic_fallback((64, 32), 4.0, CFG128)
    assert all((p.x, p.y, p.yaw) == (0.0, 0.0, 0.0) for p in traj.poses)


def test_fallback_endpoint_hits_goal(rng):
    ok = 0
    for _ in range(200):
        if ok >= 100:
            break
        fwd = rng.uniform(2.0, 20.0)
        left = rng.uniform(-8.0, 8.0)
        dist = math.hypot(fwd, left)
        bearing = math.atan2(left, fwd)
        if abs(bearing) > 1.2 or abs(2 * math.sin(bearing) / dist) > 0.45:
            continue
        speed = rng.uniform(0.0, 9.0)
        arc = dist if abs(bearing) < 1e-12 else dist * bearing / math.sin(bearing)
        v_end = 2 * arc / 2.0 - speed
        if not (speed - 9.0 <= v_end <= speed + 5.8) or v_end < 0:
            continue  # stays clear of the accel/decel caps
        goal = (64 - left / 0.5, 32 + fwd / 0.5)
        traj = kinematic_fallback((goal[0], goal[1]), speed, CFG128, max_decel=5.0, max_accel=3.0)
        end = traj.poses[-1]
        assert math.hypot(end.x - fwd, end.y - left) < 1e-6
        ok += 1
    assert ok == 100


def test_fallback_goal_behind_infeasible():
    with pytest.raises(InfeasibleGoalError):
        kinematic_fallback((64, 10), 3.0, CFG128)  # directly behind the anchor


# --- adam -------------------------------------------------------------------------

def test_adam_zero_gradient_no_change():
    net = _toy_net()
    st = AdamState.for_params(net.params, lr=0.01)
    before = {k: v.copy() for k, v in net.params.items()}
    adam_update(net.params, {k: np.zeros_like(v) for k, v in net.params.items()}, st)
    for k in before:
        assert np.array_equal(net.params[k], before[k])


def test_adam_lr_zero_no_change(rng):
    net = _toy_net()
    st = AdamState.for_params(net.params, lr=0.0)
    before = {k: v.copy() for k, v in net.params.items()}
    grads = {k: rng.normal(size=v.shape) for k, v in net.params.items()}
    adam_update(net.params, grads, st)
    for k in before:
        assert np.array_equal(net.params[k], before[k])


# --- train_step -------------------------------------------------------------------

def _toy_batch(rng, n=4):
    patch = PatchRegion.centered(16, 16, 0.5)
    return TrainBatch(
        rasters=rng.random((n, 4, 16, 16)),
        gts=rng.random((n, 16, 16)),
        weights=np.where(rng.random((n, 16, 16)) < 0.5, 0.6, 1.0),
        patch=patch,
        trajs=rng.normal(0, 1, (n, 20, 3)),
        goal_rc=rng.integers(0, 16, (n, 2)),
        speeds=rng.uniform(0, 8, n),
    )


def test_train_step_overfits_single_sample(rng):
    net = _toy_net(seed=7, randomize_heads=False)
    adam = AdamState.for_params(net.params, lr=3e-3)
    batch = _toy_batch(rng, n=1)
    first = train_step(batch, net, adam)
    last = first
    for s in range(199):
        last = train_step(batch, net, adam, step=s + 1)
    assert last <= first / 100.0


def test_train_determinism_bitwise(rng):
    batches = [_toy_batch(np.random.default_rng(100 + i)) for i in range(5)]

    def run():
        net = PlannerNet(TOY, seed=9)
        adam = AdamState.for_params(net.params, lr=1e-3)
        for i, b in enumerate(batches):
            train_step(b, net, adam, step=i)
        return net

    n1, n2 = run(), run()
    for k in n1.params:
        assert np.array_equal(n1.params[k], n2.params[k])


def test_train_step_lr_zero_keeps_params(rng):
    net = _toy_net()
    adam = AdamState.for_params(net.params, lr=0.0)
    before = {k: v.copy() for k, v in net.params.items()}
    train_step(_toy_batch(rng), net, adam)
    for k in before:
        assert np.array_equal(net.params[k], before[k])


def test_train_step_divergence_error(rng):
    from heatplan.errors import DivergenceError

    net = _toy_net()
    adam = AdamState.for_params(net.params, lr=1e-3)
    batch = _toy_batch(rng)
    batch.rasters[0, 0, 0, 0] = np.nan
    with pytest.raises(DivergenceError) as e:
        train_step(batch, net, adam, step=17)
    assert e.value.step == 17


# --- checkpoints ---------------------------------------------------------------------

def test_checkpoint_round_trip_bit_exact(tmp_path, rng):
    net = _toy_net(seed=13)
    adam = AdamState.for_params(net.params, lr=2e-4)
    for i in range(3):
        train_step(_toy_batch(rng), net, adam, step=i)
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, net, adam, step=3, extra={"note": "x"})
    net2, adam2, step, extra = load_checkpoint(path)
    assert step == 3 and extra == {"note": "x"}
    assert net2.config == net.config
    assert adam2.lr == adam.lr and adam2.step == adam.step
    for k in net.params:
        assert net.params[k].dtype == net2.params[k].dtype
        assert np.array_equal(net.params[k], net2.params[k])
        assert np.array_equal(adam.m[k], adam2.m[k])
        assert np.array_equal(adam.v[k], adam2.v[k])


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"not a checkpoint")
    with pytest.raises(DimensionError):
        load_checkpoint(p)
