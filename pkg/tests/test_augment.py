import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatplan.augment import (
    PerturbConfig,
    SamplerWeights,
    balance_weights,
    perturb_trajectory,
    sample_orientation_noise,
)
from heatplan.errors import ConfigError
from heatplan.scenario import Pose, Trajectory, TurnCategory


def test_balance_weights_paper_ratio():
    w = balance_weights({TurnCategory.STRAIGHT: 48, TurnCategory.TURN_LEFT: 1, TurnCategory.TURN_RIGHT: 1})
    assert w.straight == pytest.approx(0.010309278, abs=1e-6)
    assert w.turn_left == pytest.approx(0.494845361, abs=1e-6)
    assert w.turn_right == pytest.approx(0.494845361, abs=1e-6)
    assert w.straight + w.turn_left + w.turn_right == pytest.approx(1.0, abs=1e-12)


def test_balance_weights_symmetric():
    w = balance_weights({c: 1 for c in TurnCategory})
    assert w.straight == w.turn_left == w.turn_right == pytest.approx(1 / 3)


def test_balance_weights_scale_invariant():
    a = balance_weights({TurnCategory.STRAIGHT: 48, TurnCategory.TURN_LEFT: 1, TurnCategory.TURN_RIGHT: 1})
    b = balance_weights({TurnCategory.STRAIGHT: 480, TurnCategory.TURN_LEFT: 10, TurnCategory.TURN_RIGHT: 10})
    assert a == b


def test_balance_weights_zero_count_rejected():
    with pytest.raises(ConfigError):
        balance_weights({TurnCategory.STRAIGHT: 5, TurnCategory.TURN_LEFT: 0, TurnCategory.TURN_RIGHT: 1})


def test_balance_monte_carlo_uniform():
    """Per-sample inverse-frequency weights over a 48:1:1 corpus make the
    drawn category ratio uniform."""
    counts = {TurnCategory.STRAIGHT: 48, TurnCategory.TURN_LEFT: 1, TurnCategory.TURN_RIGHT: 1}
    w = balance_weights(counts)
    corpus = (
        [TurnCategory.STRAIGHT] * 48 + [TurnCategory.TURN_LEFT] + [TurnCategory.TURN_RIGHT]
    )
    probs = np.array([w.weight(c) for c in corpus])
    probs /= probs.sum()
    rng = np.random.default_rng(0)
    draws = rng.choice(len(corpus), size=30_000, p=probs)
    got = np.array([sum(1 for d in draws if corpus[d] is cat) for cat in TurnCategory]) / 30_000
    assert np.all(np.abs(got - 1 / 3) < 0.05 / 3 + 0.02)


def test_sampler_weights_validation():
    with pytest.raises(ConfigError):
        SamplerWeights(0.5, 0.5, 0.5)
    with pytest.raises(ConfigError):
        SamplerWeights(1.0, -0.5, 0.5)


def test_orientation_noise_bounds_and_mean():
    rng = np.random.default_rng(7)
    hr = math.pi / 6
    draws = np.array([sample_orientation_noise(rng) for _ in range(10_000)])
    assert np.all(draws > -hr) and np.all(draws < hr)
    se = hr / math.sqrt(3.0) / math.sqrt(len(draws))
    assert abs(draws.mean()) < 3 * se


def test_orientation_noise_deterministic():
    a = [sample_orientation_noise(np.random.default_rng(3)) for _ in range(5)]
    b = [sample_orientation_noise(np.random.default_rng(3)) for _ in range(5)]
    assert a == b


def _wiggly_trajectory(rng, n=21):
    xs = np.cumsum(rng.uniform(0.3, 0.8, n))
    ys = np.cumsum(rng.uniform(-0.1, 0.1, n))
    yaws = np.arctan2(np.gradient(ys), np.gradient(xs))
    return Trajectory([Pose(float(x), float(y), float(t)) for x, y, t in zip(xs, ys, yaws)])


def test_perturb_probability_zero_is_identity(rng):
    traj = _wiggly_trajectory(rng)
    out = perturb_trajectory(traj, PerturbConfig(probability=0.0), np.random.default_rng(0))
    assert out is traj


def test_perturb_endpoint_exact_and_bounds(rng):
    cfg = PerturbConfig(probability=1.0, max_pos=1.0, max_yaw=0.2)
    for i in range(1000):
        traj = _wiggly_trajectory(np.random.default_rng(i))
        out = perturb_trajectory(traj, cfg, np.random.default_rng(5000 + i))
        end_in, end_out = traj.poses[-1], out.poses[-1]
        assert (end_out.x, end_out.y, end_out.yaw) == (end_in.x, end_in.y, end_in.yaw)
        s_in, s_out = traj.poses[0], out.poses[0]
        assert abs(s_out.x - s_in.x) <= cfg.max_pos
        assert abs(s_out.y - s_in.y) <= cfg.max_pos
        assert abs(s_out.yaw - s_in.yaw) <= cfg.max_yaw + 1e-12
        assert len(out) == len(traj) and out.dt == traj.dt


def test_perturb_start_yaw_applied(rng):
    cfg = PerturbConfig(probability=1.0, max_pos=0.5, max_yaw=0.2)
    traj = _wiggly_trajectory(rng)
    out = perturb_trajectory(traj, cfg, np.random.default_rng(1))
    assert out.poses[0] != traj.poses[0]


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 60), st.integers(0, 10_000))
def test_perturb_preserves_length_any_size(n, seed):
    rng = np.random.default_rng(seed)
    traj = _wiggly_trajectory(rng, n=n)
    out = perturb_trajectory(traj, PerturbConfig(probability=1.0), np.random.default_rng(seed + 1))
    assert len(out) == n
    assert out.poses[-1] == traj.poses[-1]


def test_perturb_requires_three_poses(rng):
    short = Trajectory([Pose(0, 0, 0), Pose(1, 0, 0)])
    with pytest.raises(ValueError):
        perturb_trajectory(short, PerturbConfig(probability=1.0), np.random.default_rng(0))
