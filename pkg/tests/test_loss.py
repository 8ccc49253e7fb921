import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heatplan.errors import DimensionError
from heatplan.heatmap import PatchRegion
from heatplan.loss import finite_diff_check, hourglass_loss, mse_loss

PATCH = PatchRegion.centered(16, 16, 0.5)


def _random_inputs(rng, n=16):
    pred = rng.uniform(0, 1, (n, n))
    gt = rng.uniform(0, 1, (n, n))
    weights = np.where(rng.random((n, n)) < 0.5, 0.6, 1.0)
    return pred, gt, weights


def test_perfect_fit_zero():
    x = np.random.default_rng(0).uniform(0, 1, (16, 16))
    rep = hourglass_loss(x, x, np.ones_like(x), PATCH)
    assert rep.value == 0.0
    assert np.all(rep.gradient == 0.0)
    assert rep.n_pixels == 64


def test_single_pixel_baseline_weight():
    patch = PatchRegion(4, 4, 5, 5)
    pred = np.zeros((16, 16))
    gt = np.zeros((16, 16))
    pred[4, 4], gt[4, 4] = 0.7, 0.5
    weights = np.where(gt == 0.5, 0.6, 1.0)
    rep = hourglass_loss(pred, gt, weights, patch)
    assert rep.value == pytest.approx(0.6 * 0.04, abs=1e-15)


def test_single_pixel_peak_weight():
    patch = PatchRegion(4, 4, 5, 5)
    pred = np.zeros((16, 16))
    gt = np.zeros((16, 16))
    pred[4, 4], gt[4, 4] = 0.7, 1.0
    rep = hourglass_loss(pred, gt, np.ones((16, 16)), patch)
    assert rep.value == pytest.approx(0.09, abs=1e-15)
    assert rep.gradient[4, 4] == pytest.approx(-0.6, abs=1e-15)


def test_gradient_zero_outside_patch(rng):
    pred, gt, weights = _random_inputs(rng)
    rep = hourglass_loss(pred, gt, weights, PATCH)
    mask = np.ones((16, 16), dtype=bool)
    mask[PATCH.rows, PATCH.cols] = False
    assert np.all(rep.gradient[mask] == 0.0)


def test_outside_patch_pixels_do_not_influence(rng):
    pred, gt, weights = _random_inputs(rng)
    rep1 = hourglass_loss(pred, gt, weights, PATCH)
    bumped = pred.copy()
    bumped[0, 0] += 5.0  # outside the patch
    bumped[15, 15] -= 3.0
    rep2 = hourglass_loss(bumped, gt, weights, PATCH)
    assert rep1.value == rep2.value


def test_mse_equals_hourglass_with_unit_weights(rng):
    for _ in range(100):
        pred, gt, _ = _random_inputs(rng)
        a = mse_loss(pred, gt, PATCH)
        b = hourglass_loss(pred, gt, np.ones_like(pred), PATCH)
        assert a.value == b.value
        assert np.array_equal(a.gradient, b.gradient)


def test_hourglass_not_above_mse_on_baseline(rng):
    # fixed residual at a baseline pixel: hourglass <= mse, equality iff zero
    patch = PatchRegion(4, 4, 5, 5)
    gt = np.full((16, 16), 0.5)
    weights = np.where(gt == 0.5, 0.6, 1.0)
    for resid in rng.uniform(-1, 1, 50):
        pred = gt.copy()
        pred[4, 4] += resid
        hg = hourglass_loss(pred, gt, weights, patch).value
        ms = mse_loss(pred, gt, patch).value
        assert hg <= ms
        if resid != 0.0:
            assert hg < ms
        else:
            assert hg == ms == 0.0


def test_finite_diff_hourglass_and_mse(rng):
    worst_h = worst_m = 0.0
    for trial in range(20):
        pred, gt, weights = _random_inputs(rng)
        worst_h = max(
            worst_h,
            finite_diff_check(
                lambda p, g: hourglass_loss(p, g, weights, PATCH), pred, gt, PATCH,
                epsilon=1e-5, n_probes=64, rng=np.random.default_rng(trial),
            ),
        )
        worst_m = max(
            worst_m,
            finite_diff_check(
                lambda p, g: mse_loss(p, g, PATCH), pred, gt, PATCH,
                epsilon=1e-5, n_probes=64, rng=np.random.default_rng(trial),
            ),
        )
    assert worst_h < 1e-4
    assert worst_m < 1e-4


def test_finite_diff_zero_gradient_point():
    x = np.random.default_rng(3).uniform(0, 1, (16, 16))
    err = finite_diff_check(lambda p, g: mse_loss(p, g, PATCH), x, x.copy(), PATCH, n_probes=16)
    assert err < 1e-4


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_nonnegative_and_zero_iff_equal(seed):
    rng = np.random.default_rng(seed)
    pred, gt, weights = _random_inputs(rng)
    rep = hourglass_loss(pred, gt, weights, PATCH)
    assert rep.value >= 0.0
    equal_on_patch = np.array_equal(pred[PATCH.rows, PATCH.cols], gt[PATCH.rows, PATCH.cols])
    assert (rep.value == 0.0) == equal_on_patch


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        hourglass_loss(np.zeros((8, 8)), np.zeros((16, 16)), np.ones((8, 8)), PATCH)
    with pytest.raises(DimensionError):
        mse_loss(np.zeros((8, 8)), np.zeros((16, 16)), PATCH)


def test_epsilon_bounds():
    x = np.zeros((16, 16))
    with pytest.raises(ValueError):
        finite_diff_check(lambda p, g: mse_loss(p, g, PATCH), x, x, PATCH, epsilon=1.0)
