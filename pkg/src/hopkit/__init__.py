"""hopkit: procedural synthesis of hand-object interaction demonstrations.

Static grasp configurations go in; kinematically consistent, physics-
plausible demonstration trajectories come out, together with the reward
functions, tracking metrics, sampling and curriculum machinery needed
to train tracking policies on them.

Hot kernels (batched forward kinematics and quaternion math) run under
numba when available; set ``HOPKIT_PURE_NUMPY=1`` to force the pure
numpy implementations (both produce identical bits).
"""

from .errors import HopkitError, PlanError, SynthesisError, ValidationError
from .geom import (
    Pose,
    cubic_bezier,
    geodesic_angle,
    quat_from_axis_angle,
    quat_mul,
    quat_rotate,
    sample_in_cone,
    slerp,
)
from .grasps import (
    GraspConfiguration,
    GraspSet,
    grasp_distance,
    load_grasp_set,
    nearest_grasp,
    retarget_grasp,
    transform_grasp,
)
from .io import load_trajectory, save_trajectory
from .kinematics import (
    BUILTIN_HANDS,
    KinematicTree,
    forward_kinematics,
    forward_kinematics_batch,
    load_hand_model,
)
from .plans import ManipulationPlan, densify_plan, parse_plan, plan_to_demonstration
from .rewards import RewardConfig, frame_reward, score_report, tracking_metrics
from .scene import (
    ObjectModel,
    Workspace,
    enumerate_stable_poses,
    load_object,
    signed_distance_to_hull,
)
from .synth import (
    Frame,
    SynthConfig,
    Trajectory,
    compose,
    reverse_trajectory,
    synth_chain,
    synth_skill,
    trajectory_issues,
)
from .training import (
    CurriculumConfig,
    DistillConfig,
    DistillState,
    SamplingState,
    distill_schedule,
    perturb_initial_state,
    sample_demonstration,
    sampling_probabilities,
)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_HANDS",
    "CurriculumConfig",
    "DistillConfig",
    "DistillState",
    "Frame",
    "GraspConfiguration",
    "GraspSet",
    "HopkitError",
    "KinematicTree",
    "ManipulationPlan",
    "ObjectModel",
    "PlanError",
    "Pose",
    "RewardConfig",
    "SamplingState",
    "SynthConfig",
    "SynthesisError",
    "Trajectory",
    "ValidationError",
    "Workspace",
    "compose",
    "cubic_bezier",
    "densify_plan",
    "distill_schedule",
    "enumerate_stable_poses",
    "forward_kinematics",
    "forward_kinematics_batch",
    "frame_reward",
    "geodesic_angle",
    "grasp_distance",
    "load_grasp_set",
    "load_hand_model",
    "load_object",
    "load_trajectory",
    "nearest_grasp",
    "parse_plan",
    "perturb_initial_state",
    "plan_to_demonstration",
    "quat_from_axis_angle",
    "quat_mul",
    "quat_rotate",
    "retarget_grasp",
    "reverse_trajectory",
    "sample_demonstration",
    "sample_in_cone",
    "sampling_probabilities",
    "save_trajectory",
    "score_report",
    "signed_distance_to_hull",
    "slerp",
    "synth_chain",
    "synth_skill",
    "trajectory_issues",
    "tracking_metrics",
    "transform_grasp",
    "__version__",
]
