"""heatplan: goal-heatmap neural motion planner with a log-replay simulator."""

from .augment import PerturbConfig, SamplerWeights, balance_weights, perturb_trajectory, sample_orientation_noise
from .generate import GeneratorConfig, generate_scenario
from .heatmap import GoalLabel, GtConfig, PatchRegion, adaptive_sigma, build_gt_heatmap, gaussian_kernel, rear_agent_filter
from .loss import LossReport, finite_diff_check, hourglass_loss, mse_loss
from .model import AdamState, NetConfig, PlannerNet, argmax_goal, kinematic_fallback, load_checkpoint, save_checkpoint, train_step
from .raster import BevRaster, RasterConfig, RasterTransform, make_transform, rasterize, render_overlay
from .scenario import (
    AgentTrack,
    Category,
    Pose,
    RoadMap,
    Scenario,
    Trajectory,
    TurnCategory,
    classify_turn,
    load_scenario,
    save_scenario,
)
from .sim import (
    CollisionEvent,
    EpisodeMetrics,
    OodConfig,
    SimConfig,
    SimState,
    check_collision,
    evaluate_suite,
    make_expert_replay_planner,
    make_model_planner,
    make_ood_suite,
    make_oracle_planner,
    run_episode,
    step,
)

__version__ = "0.1.0"
