"""Imitation reward and tracking metrics for trajectory pairs.

The per-frame reward is a product of exponential sub-rewards, one per
error channel: ``r = prod_a exp(-lam_a * e_a)``. Multiplying rather
than summing makes every channel a gate: the reward is 1 exactly when
every error is zero and collapses when any single channel is badly
wrong. All errors are relative quantities, so the reward is invariant
under a common rigid transform of both trajectories. Velocity terms
are deliberately excluded: position references already pin velocity
implicitly at fixed fps, and velocity differences are dominated by
noise in retargeted data.

The interaction channel compares hand-keypoint -> object-keypoint
vectors between rollout and reference; its weight grows as the
reference hand approaches the object (see
:func:`dynamic_interact_lambda`), sharpening sensitivity exactly when
relative geometry matters most.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geom import geodesic_angle
from .synth import Frame, Trajectory

COMPONENTS = (
    "finger_pos",
    "finger_angle",
    "wrist_pos",
    "wrist_rot",
    "obj_pos",
    "obj_rot",
    "interact",
    "contact",
)


@dataclass(frozen=True)
class RewardConfig:
    """Per-channel sharpness coefficients and interaction ramp shape.

    ``lam_regrasp_*`` replace the finger coefficients on frames whose
    phase is 'regrasp' (the hand must re-seat precisely there).
    ``exclude_velocity_terms`` documents a fixed design decision and
    must stay True.
    """

    lam_finger_pos: float = 20.0
    lam_finger_angle: float = 20.0
    lam_regrasp_finger_pos: float = 200.0
    lam_regrasp_finger_angle: float = 200.0
    lam_wrist_pos: float = 20.0
    lam_wrist_rot: float = 20.0
    lam_obj_pos: float = 50.0
    lam_obj_rot: float = 50.0
    lam_interact: float = 20.0
    lam_contact: float = 5.0
    interact_gain: float = 4.0
    interact_near: float = 0.02
    interact_far: float = 0.20
    exclude_velocity_terms: bool = True

    def __post_init__(self):
        if not self.exclude_velocity_terms:
            raise ValidationError("velocity terms are excluded by design; flag must stay True")
        if not self.interact_near < self.interact_far:
            raise ValidationError("interact_near must be below interact_far")

    @staticmethod
    def from_dict(doc: dict) -> "RewardConfig":
        known = set(RewardConfig.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown reward config keys: {sorted(unknown)}")
        return RewardConfig(**doc)


@dataclass(frozen=True)
class FramePair:
    """A rollout frame matched with its reference frame."""

    rollout: Frame
    reference: Frame

    def __post_init__(self):
        a, b = self.rollout, self.reference
        if a.theta.shape != b.theta.shape:
            raise ValidationError("frame pair: DoF counts differ")
        if a.joints.shape != b.joints.shape:
            raise ValidationError("frame pair: joint counts differ")
        if a.contact.shape != b.contact.shape:
            raise ValidationError("frame pair: contact widths differ")
        if a.has_object != b.has_object:
            raise ValidationError("frame pair: object presence differs")
        if a.has_object and a.obj_keypoints.shape != b.obj_keypoints.shape:
            raise ValidationError("frame pair: object keypoint counts differ")


def sub_reward(error: float, lam: float) -> float:
    """exp(-lam * e); 1 at zero error, monotone decreasing in both."""
    if error < 0 or not np.isfinite(error):
        raise ValidationError(f"error must be finite and non-negative, got {error}")
    return math.exp(-lam * error)


def dynamic_interact_lambda(reference_distance: float, cfg: RewardConfig) -> float:
    """Interaction sharpness as a function of the reference
    hand-object distance: base * (1 + gain * ramp), where the ramp
    rises linearly from 0 at ``interact_far`` to 1 at ``interact_near``
    and clamps outside that band."""
    ramp = (cfg.interact_far - reference_distance) / (cfg.interact_far - cfg.interact_near)
    ramp = min(1.0, max(0.0, ramp))
    return cfg.lam_interact * (1.0 + cfg.interact_gain * ramp)


def reference_hand_object_distance(frame: Frame) -> float:
    """Closest hand-joint to object-keypoint distance; inf without an
    object channel (the interaction ramp then stays at its base)."""
    if not frame.has_object or frame.obj_keypoints.shape[0] == 0:
        return math.inf
    diff = frame.obj_keypoints[None, :, :] - frame.joints[:, None, :]
    return float(np.linalg.norm(diff, axis=-1).min())


def frame_errors(pair: FramePair) -> dict[str, float]:
    """Raw error channels for one frame pair (meters / radians / fractions)."""
    a, b = pair.rollout, pair.reference
    e: dict[str, float] = {}
    e["finger_pos"] = float(np.linalg.norm(a.joints - b.joints, axis=1).mean())
    e["finger_angle"] = float(np.abs(a.theta - b.theta).mean()) if a.theta.size else 0.0
    e["wrist_pos"] = float(np.linalg.norm(a.wrist.position - b.wrist.position))
    e["wrist_rot"] = geodesic_angle(a.wrist.orientation, b.wrist.orientation)
    if a.has_object:
        e["obj_pos"] = float(np.linalg.norm(a.obj_pose.position - b.obj_pose.position))
        e["obj_rot"] = geodesic_angle(a.obj_pose.orientation, b.obj_pose.orientation)
        if a.obj_keypoints.shape[0] > 0:
            va = a.obj_keypoints[None, :, :] - a.joints[:, None, :]
            vb = b.obj_keypoints[None, :, :] - b.joints[:, None, :]
            e["interact"] = float(np.linalg.norm(va - vb, axis=-1).mean())
        else:
            e["interact"] = 0.0
    else:
        e["obj_pos"] = 0.0
        e["obj_rot"] = 0.0
        e["interact"] = 0.0
    e["contact"] = (
        float(np.mean(a.contact != b.contact)) if a.contact.size else 0.0
    )
    return e


@dataclass(frozen=True)
class FrameReward:
    total: float
    components: dict[str, float] = field(default_factory=dict)
    errors: dict[str, float] = field(default_factory=dict)


def frame_reward(pair: FramePair, cfg: RewardConfig, phase: str | None = None) -> FrameReward:
    """Multiplicative imitation reward for one frame pair.

    The phase (defaulting to the reference frame's label) selects the
    finger coefficients; the interaction coefficient is evaluated at
    the reference frame's hand-object distance.
    """
    phase = phase if phase is not None else pair.reference.phase
    e = frame_errors(pair)
    regrasp = phase == "regrasp"
    lam = {
        "finger_pos": cfg.lam_regrasp_finger_pos if regrasp else cfg.lam_finger_pos,
        "finger_angle": cfg.lam_regrasp_finger_angle if regrasp else cfg.lam_finger_angle,
        "wrist_pos": cfg.lam_wrist_pos,
        "wrist_rot": cfg.lam_wrist_rot,
        "obj_pos": cfg.lam_obj_pos,
        "obj_rot": cfg.lam_obj_rot,
        "interact": dynamic_interact_lambda(
            reference_hand_object_distance(pair.reference), cfg
        ),
        "contact": cfg.lam_contact,
    }
    components = {name: sub_reward(e[name], lam[name]) for name in COMPONENTS}
    total = 1.0
    for name in COMPONENTS:
        total *= components[name]
    return FrameReward(total=total, components=components, errors=e)


def _paired_frames(rollout: Trajectory, reference: Trajectory) -> list[FramePair]:
    if len(rollout) != len(reference):
        raise ValidationError(
            f"trajectory lengths differ: {len(rollout)} vs {len(reference)}"
        )
    return [FramePair(a, b) for a, b in zip(rollout.frames, reference.frames)]


def trajectory_mean_reward(rollout: Trajectory, reference: Trajectory, cfg: RewardConfig) -> float:
    """Mean per-frame reward across an aligned trajectory pair."""
    pairs = _paired_frames(rollout, reference)
    return float(np.mean([frame_reward(p, cfg).total for p in pairs]))


def tracking_metrics(
    rollout: Trajectory,
    reference: Trajectory,
    pos_threshold: float = 0.10,
    rot_threshold_deg: float = 45.0,
    include_hand: bool = False,
    hand_threshold: float = 0.10,
) -> dict:
    """Tracking error summary for an aligned trajectory pair.

    Returns object position error (cm), object rotation error (deg),
    hand keypoint error (cm), and the per-frame success rate. A frame
    succeeds when its object position error is within ``pos_threshold``
    meters and its rotation error within ``rot_threshold_deg`` degrees;
    with ``include_hand`` the mean hand error must also be within
    ``hand_threshold`` meters. The report names the criterion used.
    """
    pairs = _paired_frames(rollout, reference)
    obj_pos = []
    obj_rot = []
    hand = []
    success = []
    for p in pairs:
        a, b = p.rollout, p.reference
        h = float(np.linalg.norm(a.joints - b.joints, axis=1).mean())
        hand.append(h)
        if a.has_object:
            dp = float(np.linalg.norm(a.obj_pose.position - b.obj_pose.position))
            dr = geodesic_angle(a.obj_pose.orientation, b.obj_pose.orientation)
        else:
            dp = 0.0
            dr = 0.0
        obj_pos.append(dp)
        obj_rot.append(dr)
        ok = dp <= pos_threshold and np.rad2deg(dr) <= rot_threshold_deg
        if include_hand:
            ok = ok and h <= hand_threshold
        success.append(ok)
    return {
        "obj_pos_err_cm": float(np.mean(obj_pos) * 100.0),
        "obj_rot_err_deg": float(np.rad2deg(np.mean(obj_rot))),
        "hand_err_cm": float(np.mean(hand) * 100.0),
        "success_rate": float(np.mean(success)),
        "success_criteria": "object+hand" if include_hand else "object",
        "frames": len(pairs),
    }


def score_report(
    rollout: Trajectory,
    reference: Trajectory,
    cfg: RewardConfig,
    include_hand: bool = False,
) -> dict:
    """Full scoring report: per-frame rewards plus summary metrics."""
    pairs = _paired_frames(rollout, reference)
    per_frame = []
    for i, p in enumerate(pairs):
        r = frame_reward(p, cfg)
        per_frame.append(
            {
                "frame": i,
                "total": r.total,
                "components": r.components,
                "errors": r.errors,
            }
        )
    metrics = tracking_metrics(rollout, reference, include_hand=include_hand)
    return {
        "per_frame": per_frame,
        "summary": {
            "mean_reward": float(np.mean([f["total"] for f in per_frame])),
            **metrics,
        },
    }
