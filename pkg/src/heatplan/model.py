"""Two-stage planning model with hand-written forward and backward passes.

Stage one is a small encoder-decoder (three stride-2 blocks, bottleneck,
three upsampling blocks with skip connections, 1x1 sigmoid head) regressing
the goal heatmap; its globally pooled bottleneck doubles as the scene
embedding. Stage two is a two-layer MLP mapping (goal pixel, embedding,
speed) to 20 ego-frame waypoints. A from-scratch Adam optimizer and a
bit-exact binary checkpoint format complete the module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import DimensionError, DivergenceError, InfeasibleGoalError
from .heatmap import PatchRegion
from .layers import (
    concat_backward,
    concat_forward,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    global_avg_pool_backward,
    global_avg_pool_forward,
    init_conv,
    init_dense,
    relu_backward,
    relu_forward,
    sigmoid_backward,
    sigmoid_forward,
    upsample2_backward,
    upsample2_forward,
)
from .loss import hourglass_loss
from .raster import RasterConfig
from .scenario import FRAME_DT, Pose, Trajectory

CHECKPOINT_MAGIC = b"HPCKPT1\n"


@dataclass(frozen=True)
class NetConfig:
    in_channels: int = 16
    enc_widths: tuple[int, int, int] = (16, 24, 32)
    tail_width: int = 12
    traj_hidden: int = 64
    horizon: int = 20
    dtype: str = "float32"
    speed_scale: float = 10.0  # m/s normalizer for the trajectory-head input

    @property
    def embedding_dim(self) -> int:
        return self.enc_widths[2]


class PlannerNet:
    """Parameter container plus forward/backward passes for both stages."""

    def __init__(self, config: NetConfig, seed: int = 0, params: dict | None = None):
        self.config = config
        dt = np.dtype(config.dtype)
        if params is not None:
            self.params = params
            return
        rng = np.random.default_rng(seed)
        w1, w2, w3 = config.enc_widths
        w0 = config.tail_width
        cin = config.in_channels
        tin = 3 + config.embedding_dim
        tout = 3 * config.horizon
        self.params = {
            "enc1_w": init_conv(rng, w1, cin, 3, dt),
            "enc1_b": np.zeros(w1, dt),
            "enc2_w": init_conv(rng, w2, w1, 3, dt),
            "enc2_b": np.zeros(w2, dt),
            "enc3_w": init_conv(rng, w3, w2, 3, dt),
            "enc3_b": np.zeros(w3, dt),
            "bott_w": init_conv(rng, w3, w3, 3, dt),
            "bott_b": np.zeros(w3, dt),
            "dec3_w": init_conv(rng, w2, w3 + w2, 3, dt),
            "dec3_b": np.zeros(w2, dt),
            "dec2_w": init_conv(rng, w1, w2 + w1, 3, dt),
            "dec2_b": np.zeros(w1, dt),
            "dec1_w": init_conv(rng, w0, w1, 3, dt),
            "dec1_b": np.zeros(w0, dt),
            "head_w": np.zeros((1, w0, 1, 1), dt),  # sigmoid starts flat at 0.5
            "head_b": np.zeros(1, dt),
            "fc1_w": init_dense(rng, tin, config.traj_hidden, dt),
            "fc1_b": np.zeros(config.traj_hidden, dt),
            "fc2_w": np.zeros((config.traj_hidden, tout), dt),
            "fc2_b": np.zeros(tout, dt),
        }

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- heatmap stage ---------------------------------------------------------

    def forward(self, x: np.ndarray):
        """x: (B, C, H, W) -> (heatmap (B, H, W) in (0,1), embedding (B, E), cache)."""
        p = self.params
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise DimensionError(f"expected (B, {self.config.in_channels}, H, W), got {x.shape}")
        if x.shape[2] % 8 or x.shape[3] % 8:
            raise DimensionError("input height and width must be divisible by 8")
        x = np.ascontiguousarray(x, dtype=self.config.dtype)
        z1, c1 = conv2d_forward(x, p["enc1_w"], p["enc1_b"], stride=2)
        a1, m1 = relu_forward(z1)
        z2, c2 = conv2d_forward(a1, p["enc2_w"], p["enc2_b"], stride=2)
        a2, m2 = relu_forward(z2)
        z3, c3 = conv2d_forward(a2, p["enc3_w"], p["enc3_b"], stride=2)
        a3, m3 = relu_forward(z3)
        z4, c4 = conv2d_forward(a3, p["bott_w"], p["bott_b"])
        a4, m4 = relu_forward(z4)
        emb, gshape = global_avg_pool_forward(a4)
        u3, us3 = upsample2_forward(a4)
        cc3, sp3 = concat_forward(u3, a2)
        z5, c5 = conv2d_forward(cc3, p["dec3_w"], p["dec3_b"])
        a5, m5 = relu_forward(z5)
        u2, us2 = upsample2_forward(a5)
        cc2, sp2 = concat_forward(u2, a1)
        z6, c6 = conv2d_forward(cc2, p["dec2_w"], p["dec2_b"])
        a6, m6 = relu_forward(z6)
        u1, us1 = upsample2_forward(a6)
        z7, c7 = conv2d_forward(u1, p["dec1_w"], p["dec1_b"])
        a7, m7 = relu_forward(z7)
        logits, c8 = conv2d_forward(a7, p["head_w"], p["head_b"])
        heat, sig = sigmoid_forward(logits)
        cache = (c1, m1, c2, m2, c3, m3, c4, m4, gshape, us3, sp3, c5, m5, us2, sp2, c6, m6, us1, c7, m7, c8, sig)
        return heat[:, 0], emb, cache

    def presigmoid(self, x: np.ndarray) -> np.ndarray:
        """Logits of the heatmap head, used by the shift-consistency checks."""
        heat, _, cache = self.forward(x)
        sig = cache[-1]
        out = np.log(sig[:, 0]) - np.log1p(-sig[:, 0])
        return out

    def backward(self, cache, d_heat: np.ndarray, d_emb: np.ndarray | None = None) -> dict:
        (c1, m1, c2, m2, c3, m3, c4, m4, gshape, us3, sp3, c5, m5, us2, sp2, c6, m6, us1, c7, m7, c8, sig) = cache
        d_logits = sigmoid_backward(d_heat[:, None].astype(sig.dtype, copy=False), sig)
        d_a7, dw_head, db_head = conv2d_backward(d_logits, c8)
        d_u1, dw_dec1, db_dec1 = conv2d_backward(relu_backward(d_a7, m7), c7)
        d_a6 = upsample2_backward(d_u1, us1)
        d_cc2, dw_dec2, db_dec2 = conv2d_backward(relu_backward(d_a6, m6), c6)
        d_u2, d_a1_skip = concat_backward(d_cc2, sp2)
        d_a5 = upsample2_backward(d_u2, us2)
        d_cc3, dw_dec3, db_dec3 = conv2d_backward(relu_backward(d_a5, m5), c5)
        d_u3, d_a2_skip = concat_backward(d_cc3, sp3)
        d_a4 = upsample2_backward(d_u3, us3)
        if d_emb is not None:
            d_a4 = d_a4 + global_avg_pool_backward(d_emb.astype(d_a4.dtype, copy=False), gshape)
        d_a3, dw_bott, db_bott = conv2d_backward(relu_backward(d_a4, m4), c4)
        d_a2, dw_enc3, db_enc3 = conv2d_backward(relu_backward(d_a3, m3), c3)
        d_a2 = d_a2 + d_a2_skip
        d_a1, dw_enc2, db_enc2 = conv2d_backward(relu_backward(d_a2, m2), c2)
        d_a1 = d_a1 + d_a1_skip
        _, dw_enc1, db_enc1 = conv2d_backward(relu_backward(d_a1, m1), c1)
        return {
            "enc1_w": dw_enc1, "enc1_b": db_enc1,
            "enc2_w": dw_enc2, "enc2_b": db_enc2,
            "enc3_w": dw_enc3, "enc3_b": db_enc3,
            "bott_w": dw_bott, "bott_b": db_bott,
            "dec3_w": dw_dec3, "dec3_b": db_dec3,
            "dec2_w": dw_dec2, "dec2_b": db_dec2,
            "dec1_w": dw_dec1, "dec1_b": db_dec1,
            "head_w": dw_head, "head_b": db_head,
        }

    # -- trajectory stage --------------------------------------------------------

    def traj_forward(self, goal_norm: np.ndarray, emb: np.ndarray, speed: np.ndarray):
        """goal_norm: (B, 2) in [0,1]; emb: (B, E); speed: (B,) m/s.

        Returns ((B, horizon, 3) waypoint offsets, cache).
        """
        p = self.params
        dt = np.dtype(self.config.dtype)
        tin = np.concatenate(
            [
                np.asarray(goal_norm, dt).reshape(len(emb), 2),
                emb.astype(dt, copy=False),
                np.asarray(speed, dt).reshape(-1, 1) / self.config.speed_scale,
            ],
            axis=1,
        )
        h, dc1 = dense_forward(tin, p["fc1_w"], p["fc1_b"])
        a, m = relu_forward(h)
        out, dc2 = dense_forward(a, p["fc2_w"], p["fc2_b"])
        cache = (dc1, m, dc2)
        return out.reshape(len(emb), self.config.horizon, 3), cache

    def traj_backward(self, cache, d_out: np.ndarray):
        dc1, m, dc2 = cache
        d_flat = d_out.reshape(d_out.shape[0], -1).astype(self.config.dtype, copy=False)
        d_a, dw2, db2 = dense_backward(d_flat, dc2)
        d_tin, dw1, db1 = dense_backward(relu_backward(d_a, m), dc1)
        grads = {"fc1_w": dw1, "fc1_b": db1, "fc2_w": dw2, "fc2_b": db2}
        d_emb = d_tin[:, 2 : 2 + self.config.embedding_dim]
        return grads, d_emb

    def predict_trajectory(
        self, goal_rc: tuple[int, int], emb: np.ndarray, speed: float, size: tuple[int, int]
    ) -> Trajectory:
        """Single-sample stage-two inference: goal pixel to an ego-frame trajectory."""
        h, w = size
        goal_norm = np.array([[goal_rc[0] / max(h - 1, 1), goal_rc[1] / max(w - 1, 1)]])
        out, _ = self.traj_forward(goal_norm, emb.reshape(1, -1), np.array([speed]))
        poses = [Pose(float(x), float(y), float(yaw)) for x, y, yaw in out[0]]
        return Trajectory(poses, dt=FRAME_DT)


def argmax_goal(heatmap: np.ndarray, patch: PatchRegion) -> tuple[int, int]:
    """Pixel of maximum heatmap value inside the patch; ties resolve to the
    smallest row, then the smallest column."""
    sub = heatmap[patch.rows, patch.cols]
    flat = int(np.argmax(sub))
    r, c = divmod(flat, sub.shape[1])
    return patch.row0 + r, patch.col0 + c


def kinematic_fallback(
    goal_rc: tuple[int, int],
    speed: float,
    raster_config: RasterConfig,
    horizon: int = 20,
    max_accel: float = 3.0,
    max_decel: float = 5.0,
    max_curvature: float = 0.5,
) -> Trajectory:
    """Constant-curvature arc from the ego to the goal pixel.

    The speed ramps linearly from the current speed to whatever end speed
    traverses the arc in the 2 s horizon, clipped by the accel/decel limits
    (never reversing). Returns `horizon` ego-frame poses at 0.1 s.
    """
    ax, ay = raster_config.anchor_px
    fwd = (goal_rc[1] - ax) * raster_config.resolution
    left = -(goal_rc[0] - ay) * raster_config.resolution
    dist = math.hypot(fwd, left)
    horizon_t = horizon * FRAME_DT

    if dist < 1e-9:  # goal at the ego: full stop, heading held
        return Trajectory([Pose(0.0, 0.0, 0.0)] * horizon, dt=FRAME_DT)

    bearing = math.atan2(left, fwd)
    if abs(bearing) > math.pi / 2.0:
        raise InfeasibleGoalError(f"goal bearing {bearing:.2f} rad is behind the ego")
    curvature = 2.0 * math.sin(bearing) / dist
    if abs(curvature) > max_curvature:
        raise InfeasibleGoalError(f"required curvature {curvature:.2f} exceeds {max_curvature}")
    arc_len = dist if abs(bearing) < 1e-12 else dist * bearing / math.sin(bearing)

    v_end = 2.0 * arc_len / horizon_t - speed
    v_end = min(max(v_end, speed - max_decel * horizon_t, 0.0), speed + max_accel * horizon_t)
    poses = []
    for k in range(1, horizon + 1):
        t = k * FRAME_DT
        s = speed * t + (v_end - speed) * t * t / (2.0 * horizon_t)
        s = min(max(s, 0.0), arc_len)
        if abs(curvature) < 1e-12:
            poses.append(Pose(s, 0.0, 0.0))
        else:
            poses.append(
                Pose(
                    math.sin(curvature * s) / curvature,
                    (1.0 - math.cos(curvature * s)) / curvature,
                    curvature * s,
                )
            )
    return Trajectory(poses, dt=FRAME_DT)


# --- optimizer -----------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, lr: float = 1e-4, **kw) -> "AdamState":
        st = cls(lr=lr, **kw)
        st.m = {k: np.zeros_like(p) for k, p in params.items()}
        st.v = {k: np.zeros_like(p) for k, p in params.items()}
        return st


def adam_update(params: dict, grads: dict, st: AdamState) -> None:
    st.step += 1
    bc1 = 1.0 - st.beta1 ** st.step
    bc2 = 1.0 - st.beta2 ** st.step
    for k, g in grads.items():
        g = g.astype(params[k].dtype, copy=False)
        st.m[k] = st.beta1 * st.m[k] + (1.0 - st.beta1) * g
        st.v[k] = st.beta2 * st.v[k] + (1.0 - st.beta2) * (g * g)
        params[k] -= st.lr * (st.m[k] / bc1) / (np.sqrt(st.v[k] / bc2) + st.eps)


# --- training step ---------------------------------------------------------------

@dataclass
class TrainBatch:
    rasters: np.ndarray  # (B, C, H, W)
    gts: np.ndarray  # (B, H, W)
    weights: np.ndarray  # (B, H, W)
    patch: PatchRegion
    trajs: np.ndarray  # (B, horizon, 3)
    goal_rc: np.ndarray  # (B, 2) rows, cols
    speeds: np.ndarray  # (B,)


def train_step(
    batch: TrainBatch,
    net: PlannerNet,
    adam: AdamState,
    traj_weight: float = 1.0,
    heat_normalize: bool = False,
    step: int = 0,
) -> float:
    """One joint update: hourglass heatmap loss + MSE waypoint loss (teacher-
    forced goal input), analytic backprop, one Adam step. Returns the total
    batch loss; raises DivergenceError when it goes non-finite."""
    bsz = len(batch.rasters)
    if bsz == 0:
        raise ValueError("batch must be non-empty")
    heat, emb, cache = net.forward(batch.rasters)
    h, w = heat.shape[1:]
    d_heat = np.zeros_like(heat)
    heat_total = 0.0
    scale = 1.0 / batch.patch.n_pixels if heat_normalize else 1.0
    for i in range(bsz):
        rep = hourglass_loss(heat[i], batch.gts[i], batch.weights[i], batch.patch)
        heat_total += rep.value * scale
        d_heat[i] = rep.gradient * scale

    goal_norm = batch.goal_rc.astype(float) / np.array([max(h - 1, 1), max(w - 1, 1)])
    t_out, t_cache = net.traj_forward(goal_norm, emb, batch.speeds)
    resid = t_out - batch.trajs.astype(t_out.dtype, copy=False)
    n_out = resid.shape[1] * resid.shape[2]
    traj_total = traj_weight * float(np.sum(resid * resid) / n_out)
    d_tout = traj_weight * 2.0 * resid / n_out

    total = heat_total + traj_total
    if not math.isfinite(total):
        raise DivergenceError(step)

    t_grads, d_emb = net.traj_backward(t_cache, d_tout)
    grads = net.backward(cache, d_heat, d_emb)
    grads.update(t_grads)
    adam_update(net.params, grads, adam)
    return total


# --- checkpoint I/O ---------------------------------------------------------------

def save_checkpoint(path, net: PlannerNet, adam: AdamState, step: int, extra: dict | None = None) -> None:
    """Single binary file: magic, u32 manifest length, JSON manifest, raw
    little-endian array bytes. Round trips bit-exactly."""
    arrays = []
    blobs = []
    offset = 0
    for group, src in (("param", net.params), ("adam_m", adam.m), ("adam_v", adam.v)):
        for name in sorted(src):
            arr = np.ascontiguousarray(src[name])
            raw = arr.tobytes()
            arrays.append(
                {
                    "name": f"{group}/{name}",
                    "shape": list(arr.shape),
                    "dtype": arr.dtype.str,
                    "offset": offset,
                }
            )
            blobs.append(raw)
            offset += len(raw)
    manifest = {
        "format_version": 1,
        "net": {**asdict(net.config), "enc_widths": list(net.config.enc_widths)},
        "adam": {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "step": adam.step},
        "step": step,
        "arrays": arrays,
        "extra": extra or {},
    }
    head = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(len(head).to_bytes(4, "little"))
        f.write(head)
        for raw in blobs:
            f.write(raw)


def load_checkpoint(path) -> tuple[PlannerNet, AdamState, int, dict]:
    raw = Path(path).read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DimensionError(f"{path}: not a checkpoint file")
    n = int.from_bytes(raw[8:12], "little")
    manifest = json.loads(raw[12 : 12 + n].decode())
    data = raw[12 + n :]
    net_cfg_d = dict(manifest["net"])
    net_cfg_d["enc_widths"] = tuple(net_cfg_d["enc_widths"])
    cfg = NetConfig(**net_cfg_d)
    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}}
    for meta in manifest["arrays"]:
        group, name = meta["name"].split("/", 1)
        arr = np.frombuffer(data, dtype=np.dtype(meta["dtype"]), count=int(np.prod(meta["shape"]) or 1), offset=meta["offset"])
        groups[group][name] = arr.reshape(meta["shape"]).copy()
    net = PlannerNet(cfg, params=groups["param"])
    a = manifest["adam"]
    adam = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], step=a["step"], m=groups["adam_m"], v=groups["adam_v"])
    return net, adam, manifest["step"], manifest.get("extra", {})
