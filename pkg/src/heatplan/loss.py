"""Heatmap regression losses restricted to the center patch.

The relaxed hourglass loss is a per-pixel weighted squared error whose
weights down-weight baseline-valued (drivable-but-suboptimal) ground-truth
pixels; the plain MSE variant is the ablation baseline. Both report the
analytic gradient with respect to the prediction, verified against central
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .heatmap import PatchRegion


@dataclass
class LossReport:
    value: float
    gradient: np.ndarray  # d value / d pred, zero outside the patch
    n_pixels: int


def hourglass_loss(
    pred: np.ndarray, gt: np.ndarray, weights: np.ndarray, patch: PatchRegion
) -> LossReport:
    """value = sum over patch of w * (pred - gt)^2, gradient = 2 w (pred - gt)."""
    if pred.shape != gt.shape or pred.shape != weights.shape:
        raise DimensionError(
            f"shape mismatch: pred {pred.shape}, gt {gt.shape}, weights {weights.shape}"
        )
    rows, cols = patch.rows, patch.cols
    resid = pred[rows, cols] - gt[rows, cols]
    w = weights[rows, cols]
    value = float(np.sum(w * resid * resid))
    gradient = np.zeros_like(pred)
    gradient[rows, cols] = 2.0 * w * resid
    return LossReport(value=value, gradient=gradient, n_pixels=patch.n_pixels)


def mse_loss(pred: np.ndarray, gt: np.ndarray, patch: PatchRegion) -> LossReport:
    """Hourglass loss with every weight equal to 1 (vanilla L2 ablation)."""
    if pred.shape != gt.shape:
        raise DimensionError(f"shape mismatch: pred {pred.shape}, gt {gt.shape}")
    return hourglass_loss(pred, gt, np.ones_like(pred), patch)


def finite_diff_check(
    loss_fn,
    pred: np.ndarray,
    gt: np.ndarray,
    patch: PatchRegion,
    epsilon: float = 1e-5,
    n_probes: int = 64,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between the analytic gradient and central differences.

    Probe pixels are sampled inside the patch; loss_fn(pred, gt) must return
    a LossReport.
    """
    if not (1e-8 < epsilon < 1e-2):
        raise ValueError("epsilon must lie in (1e-8, 1e-2)")
    rng = rng or np.random.default_rng(0)
    analytic = loss_fn(pred, gt).gradient
    worst = 0.0
    for _ in range(n_probes):
        r = int(rng.integers(patch.row0, patch.row1))
        c = int(rng.integers(patch.col0, patch.col1))
        bumped = pred.copy()
        bumped[r, c] = pred[r, c] + epsilon
        up = loss_fn(bumped, gt).value
        bumped[r, c] = pred[r, c] - epsilon
        down = loss_fn(bumped, gt).value
        numeric = (up - down) / (2.0 * epsilon)
        denom = max(abs(analytic[r, c]), abs(numeric), 1e-6)
        worst = max(worst, abs(analytic[r, c] - numeric) / denom)
    return worst
