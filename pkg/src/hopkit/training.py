"""Training-side machinery: adaptive demonstration sampling, the
two-stage curriculum (object scaling and initial-state perturbation),
and the four-stage teacher-student distillation schedule.

Everything here is pure bookkeeping over scalars and small arrays; the
actual policy optimization happens elsewhere. Functions are
deterministic in (inputs, rng), so training runs can be replayed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .geom import Pose, quat_from_axis_angle, quat_mul, random_quat
from .kinematics import KinematicTree, forward_kinematics
from .synth import Frame


# ---------------------------------------------------------------------------
# Adaptive demonstration sampling


@dataclass(frozen=True)
class SamplingState:
    """Per-demonstration mean tracking rewards plus the softmax
    sharpness. lam = 0 recovers uniform sampling; larger lam shifts
    probability mass onto poorly tracked (low reward) demonstrations."""

    mean_rewards: np.ndarray
    lam: float = 10.0

    def __post_init__(self):
        r = np.asarray(self.mean_rewards, dtype=np.float64).reshape(-1)
        if r.size == 0:
            raise ValidationError("sampling state needs at least one demonstration")
        if not np.all(np.isfinite(r)):
            raise ValidationError("mean rewards must be finite")
        r.setflags(write=False)
        object.__setattr__(self, "mean_rewards", r)
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValidationError("lam must be finite and non-negative")


def sampling_probabilities(state: SamplingState) -> np.ndarray:
    """softmax(-lam * mean_reward), computed with a max shift so large
    populations cannot overflow; sums to 1 within float accuracy."""
    logits = -state.lam * state.mean_rewards
    logits = logits - logits.max()
    w = np.exp(logits)
    return w / w.sum()


def sample_demonstration(state: SamplingState, rng: np.random.Generator) -> int:
    """Draw one demonstration index under the adaptive distribution."""
    return int(rng.choice(state.mean_rewards.size, p=sampling_probabilities(state)))


# ---------------------------------------------------------------------------
# Curriculum: object scale + initial-state perturbation


@dataclass(frozen=True)
class CurriculumConfig:
    """Stage-dependent randomization knobs.

    Stage 1 trains at nominal scale with baseline perturbation
    amplitudes; stage 2 randomizes object scale and ramps the
    perturbation amplitudes up to a cap. Perturbation probability is
    per-skill: regrasp initial states are perturbed more often because
    the skill is brittle to seating errors.
    """

    scale_probability: float = 0.2
    scale_range: tuple[float, float] = (0.75, 1.5)
    perturb_probability: dict = field(
        default_factory=lambda: {"regrasp": 0.5, "default": 0.3}
    )
    # Amplitudes (uniform, zero-mean): finger angles (rad), finger
    # velocities (rad/s), object linear velocity (m/s), object rotation
    # (rad), object position (m).
    amp_finger_angle: float = float(np.pi / 8.0)
    amp_finger_velocity: float = 0.1
    amp_object_velocity: float = 0.02
    amp_object_rotation: float = 0.02
    amp_object_position: float = 0.02
    # Contact frames get gentler object-position noise and only
    # in-plane (yaw) rotation noise, so the grasp is not torn open.
    contact_position_factor: float = 0.25
    stage2_ramp_epochs: int = 2000
    stage2_amplitude_cap: float = 1.5

    @staticmethod
    def from_dict(doc: dict) -> "CurriculumConfig":
        known = set(CurriculumConfig.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown curriculum config keys: {sorted(unknown)}")
        kwargs = dict(doc)
        if "scale_range" in kwargs:
            kwargs["scale_range"] = tuple(kwargs["scale_range"])
        return CurriculumConfig(**kwargs)


def sample_object_scale(cfg: CurriculumConfig, stage: int, rng: np.random.Generator) -> float:
    """Object scale for one episode. Stage 1 always returns 1.0; stage 2
    draws from the configured range with ``scale_probability`` and
    otherwise keeps the nominal scale."""
    if stage <= 1:
        return 1.0
    if rng.random() < cfg.scale_probability:
        return float(rng.uniform(*cfg.scale_range))
    return 1.0


def amplitude_multiplier(cfg: CurriculumConfig, stage: int, epochs_into_stage: int = 0) -> float:
    """Perturbation amplitude scaling: 1.0 in stage 1; in stage 2 a
    linear ramp from 1.0 to the cap over ``stage2_ramp_epochs``."""
    if stage <= 1:
        return 1.0
    if cfg.stage2_ramp_epochs <= 0:
        return cfg.stage2_amplitude_cap
    frac = min(1.0, max(0.0, epochs_into_stage / cfg.stage2_ramp_epochs))
    return 1.0 + frac * (cfg.stage2_amplitude_cap - 1.0)


def perturb_probability(cfg: CurriculumConfig, phase: str) -> float:
    return float(cfg.perturb_probability.get(phase, cfg.perturb_probability.get("default", 0.3)))


@dataclass(frozen=True)
class InitialState:
    """A perturbed episode start: the kinematic frame plus the velocity
    perturbations a simulator should apply on reset."""

    frame: Frame
    finger_velocity: np.ndarray
    object_velocity: np.ndarray

    def __post_init__(self):
        fv = np.asarray(self.finger_velocity, dtype=np.float64).reshape(-1)
        ov = np.asarray(self.object_velocity, dtype=np.float64).reshape(-1)
        fv.setflags(write=False)
        ov.setflags(write=False)
        object.__setattr__(self, "finger_velocity", fv)
        object.__setattr__(self, "object_velocity", ov)


def perturb_initial_state(
    frame: Frame,
    tree: KinematicTree,
    cfg: CurriculumConfig,
    stage: int,
    rng: np.random.Generator,
    epochs_into_stage: int = 0,
) -> InitialState:
    """Randomize an episode's initial state.

    With probability 1 - p(skill) the frame is returned untouched (zero
    velocity perturbations). Otherwise bounded zero-mean noise is added
    to finger angles (clamped to joint limits), finger velocities, the
    object pose, and the object velocity; the finger joints are rebuilt
    by forward kinematics so the frame invariants still hold. Frames in
    contact get object-position noise shrunk by
    ``contact_position_factor`` and rotation noise restricted to yaw,
    which preserves the grasp; free frames get full 3d noise.
    """
    p = perturb_probability(cfg, frame.phase)
    if rng.random() >= p:
        return InitialState(
            frame=frame,
            finger_velocity=np.zeros(tree.dof),
            object_velocity=np.zeros(3),
        )
    mult = amplitude_multiplier(cfg, stage, epochs_into_stage)
    theta = np.asarray(frame.theta) + rng.uniform(
        -cfg.amp_finger_angle * mult, cfg.amp_finger_angle * mult, size=tree.dof
    )
    theta = tree.clamp(theta)
    joints = forward_kinematics(tree, frame.wrist, theta)
    finger_vel = rng.uniform(
        -cfg.amp_finger_velocity * mult, cfg.amp_finger_velocity * mult, size=tree.dof
    )

    obj_pose = frame.obj_pose
    obj_kp = frame.obj_keypoints
    obj_vel = np.zeros(3)
    if frame.has_object:
        in_contact = bool(np.any(frame.contact))
        amp_pos = cfg.amp_object_position * mult
        if in_contact:
            amp_pos *= cfg.contact_position_factor
        offset = rng.uniform(-amp_pos, amp_pos, size=3)
        angle = float(rng.uniform(-cfg.amp_object_rotation * mult, cfg.amp_object_rotation * mult))
        if in_contact:
            axis = np.array([0.0, 0.0, 1.0])
        else:
            axis = random_quat(rng)[1:]
            n = np.linalg.norm(axis)
            axis = np.array([0.0, 0.0, 1.0]) if n < 1e-9 else axis / n
        spin = quat_from_axis_angle(axis, angle)
        # Rotate about the object's own origin, then shift.
        local_kp = frame.obj_pose.inverse().apply(frame.obj_keypoints)
        obj_pose = Pose(
            frame.obj_pose.position + offset,
            quat_mul(spin, frame.obj_pose.orientation),
        )
        obj_kp = obj_pose.apply(local_kp)
        obj_vel = rng.uniform(-cfg.amp_object_velocity * mult, cfg.amp_object_velocity * mult, size=3)

    new_frame = replace(
        frame,
        theta=theta,
        joints=joints,
        obj_pose=obj_pose,
        obj_keypoints=obj_kp,
    )
    return InitialState(frame=new_frame, finger_velocity=finger_vel, object_velocity=obj_vel)


# ---------------------------------------------------------------------------
# Distillation schedule


DISTILL_STAGE2_EPOCH = 500
DISTILL_STAGE3_EPOCH = 5000
DISTILL_STAGE4_EPOCH = 7000


@dataclass(frozen=True)
class DistillConfig:
    """Loss weights and the gate that admits the policy-gradient term.

    Stage boundaries are fixed (epochs 500 / 5000 / 7000). The final
    stage trains all four losses with the weights below; during stage 3
    the policy-gradient loss switches on only once the critic's
    explained variance has exceeded ``ev_gate`` for ``ev_consecutive``
    consecutive evaluation windows.
    """

    weight_expert: float = 0.1
    weight_policy_gradient: float = 1.0
    weight_value: float = 0.5
    weight_boundary: float = 0.01
    ev_gate: float = 0.6
    ev_consecutive: int = 3
    ev_window_epochs: int = 100

    @staticmethod
    def from_dict(doc: dict) -> "DistillConfig":
        known = set(DistillConfig.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown distill config keys: {sorted(unknown)}")
        return DistillConfig(**doc)


@dataclass(frozen=True)
class DistillState:
    """Where training currently is: the epoch plus the history of
    explained-variance readings (one per evaluation window)."""

    epoch: int
    ev_history: tuple[float, ...] = ()

    def __post_init__(self):
        if self.epoch < 0:
            raise ValidationError("epoch must be non-negative")
        object.__setattr__(self, "ev_history", tuple(float(v) for v in self.ev_history))


def policy_gradient_gate(state: DistillState, cfg: DistillConfig) -> bool:
    """True once any ``ev_consecutive`` consecutive explained-variance
    readings strictly exceed the gate. Latches: the gate stays open
    once such a run has occurred."""
    run = 0
    for v in state.ev_history:
        run = run + 1 if v > cfg.ev_gate else 0
        if run >= cfg.ev_consecutive:
            return True
    return False


@dataclass(frozen=True)
class ScheduleStep:
    stage: int
    teacher_probability: float
    loss_weights: dict


def distill_schedule(state: DistillState, cfg: DistillConfig | None = None) -> ScheduleStep:
    """Teacher-student schedule at one epoch.

    Stage 1 (epochs [0, 500)): pure behavior cloning; the teacher acts
    with probability 1 and only the expert loss trains. Stage 2
    ([500, 5000)): the teacher probability decays linearly,
    (5000 - epoch) / 4500, handing control to the student smoothly.
    Stage 3 ([5000, 7000)): the teacher is off; the value head trains
    and the policy-gradient loss joins once the explained-variance gate
    opens. Stage 4 (>= 7000): all four losses at the configured
    weights.
    """
    cfg = cfg if cfg is not None else DistillConfig()
    e = state.epoch
    if e < DISTILL_STAGE2_EPOCH:
        return ScheduleStep(
            stage=1,
            teacher_probability=1.0,
            loss_weights={
                "expert": 1.0,
                "policy_gradient": 0.0,
                "value": 0.0,
                "boundary": 0.0,
            },
        )
    if e < DISTILL_STAGE3_EPOCH:
        prob = (DISTILL_STAGE3_EPOCH - e) / (DISTILL_STAGE3_EPOCH - DISTILL_STAGE2_EPOCH)
        return ScheduleStep(
            stage=2,
            teacher_probability=float(prob),
            loss_weights={
                "expert": 1.0,
                "policy_gradient": 0.0,
                "value": 0.0,
                "boundary": 0.0,
            },
        )
    if e < DISTILL_STAGE4_EPOCH:
        gate = policy_gradient_gate(state, cfg)
        return ScheduleStep(
            stage=3,
            teacher_probability=0.0,
            loss_weights={
                "expert": 1.0,
                "policy_gradient": cfg.weight_policy_gradient if gate else 0.0,
                "value": cfg.weight_value,
                "boundary": 0.0,
            },
        )
    return ScheduleStep(
        stage=4,
        teacher_probability=0.0,
        loss_weights={
            "expert": cfg.weight_expert,
            "policy_gradient": cfg.weight_policy_gradient,
            "value": cfg.weight_value,
            "boundary": cfg.weight_boundary,
        },
    )
