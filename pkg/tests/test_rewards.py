"""Multiplicative imitation reward: closed-form values, log-additivity,
rigid invariance, and the tracking metric summary."""

import math
from dataclasses import replace

import numpy as np
import pytest

from hopkit.errors import ValidationError
from hopkit.geom import Pose, quat_from_axis_angle, quat_identity, random_quat
from hopkit.rewards import (
    COMPONENTS,
    FramePair,
    RewardConfig,
    dynamic_interact_lambda,
    frame_errors,
    frame_reward,
    reference_hand_object_distance,
    score_report,
    sub_reward,
    tracking_metrics,
    trajectory_mean_reward,
)
from hopkit.synth import Frame, SynthConfig, Trajectory, synth_grasp
from hopkit.grasps import transform_grasp

RNG = np.random.default_rng(777)


def rng_(seed):
    return np.random.default_rng(seed)


def shift_frame(f: Frame, dp=None, dq=None, dtheta=None, obj_dp=None, contact=None) -> Frame:
    wrist = Pose(
        f.wrist.position + (dp if dp is not None else 0.0),
        f.wrist.orientation if dq is None else dq,
    )
    changes = {"wrist": wrist}
    if dtheta is not None:
        changes["theta"] = f.theta + dtheta
    if obj_dp is not None:
        changes["obj_pose"] = Pose(f.obj_pose.position + obj_dp, f.obj_pose.orientation)
    if contact is not None:
        changes["contact"] = contact
    return replace(f, **changes)


def transform_trajectory(t: Trajectory, g: Pose) -> Trajectory:
    frames = []
    for f in t.frames:
        frames.append(
            Frame(
                wrist=g.compose(f.wrist),
                theta=f.theta,
                joints=g.apply(f.joints),
                contact=f.contact,
                phase=f.phase,
                obj_pose=None if f.obj_pose is None else g.compose(f.obj_pose),
                obj_keypoints=None if f.obj_keypoints is None else g.apply(f.obj_keypoints),
            )
        )
    return Trajectory(frames=tuple(frames), fps=t.fps, provenance=dict(t.provenance))


@pytest.fixture(scope="module")
def grasp_clip(claw, cube, claw_grasps):
    return synth_grasp(SynthConfig(), claw, claw_grasps, cube, rng_(0))


# ---------------------------------------------------------------------------
# sub_reward


def test_sub_reward_closed_forms():
    assert sub_reward(0.0, 50.0) == 1.0
    # 2 cm object error at lambda 50 lands exactly on 1/e.
    assert sub_reward(0.02, 50.0) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert sub_reward(0.1, 20.0) == pytest.approx(math.exp(-2.0), abs=1e-15)


def test_sub_reward_monotone_and_bounded():
    errs = np.linspace(0.0, 2.0, 50)
    vals = [sub_reward(float(e), 20.0) for e in errs]
    assert all(0.0 < v <= 1.0 for v in vals)
    assert all(vals[i] > vals[i + 1] for i in range(len(vals) - 1))
    lams = [sub_reward(0.5, float(l)) for l in np.linspace(0.1, 10, 20)]
    assert all(lams[i] > lams[i + 1] for i in range(len(lams) - 1))


def test_sub_reward_log_additivity():
    rng = rng_(1)
    errs = rng.uniform(0.0, 0.5, size=(10000, 2))
    for e1, e2 in errs:
        lhs = math.log(sub_reward(e1 + e2, 20.0))
        rhs = math.log(sub_reward(e1, 20.0)) + math.log(sub_reward(e2, 20.0))
        assert abs(lhs - rhs) < 1e-9


def test_sub_reward_rejects_bad_errors():
    with pytest.raises(ValidationError):
        sub_reward(-0.1, 20.0)
    with pytest.raises(ValidationError):
        sub_reward(math.nan, 20.0)
    with pytest.raises(ValidationError):
        sub_reward(math.inf, 20.0)


# ---------------------------------------------------------------------------
# dynamic interaction sharpness


def test_dynamic_interact_lambda_ramp():
    cfg = RewardConfig()
    # Base coefficient far from the object, 1 + gain times base when close.
    assert dynamic_interact_lambda(0.20, cfg) == pytest.approx(cfg.lam_interact)
    assert dynamic_interact_lambda(5.0, cfg) == pytest.approx(cfg.lam_interact)
    assert dynamic_interact_lambda(math.inf, cfg) == pytest.approx(cfg.lam_interact)
    near = cfg.lam_interact * (1.0 + cfg.interact_gain)
    assert dynamic_interact_lambda(0.02, cfg) == pytest.approx(near)
    assert dynamic_interact_lambda(0.0, cfg) == pytest.approx(near)
    # Halfway along the band the ramp is exactly one half.
    mid = (cfg.interact_near + cfg.interact_far) / 2.0
    assert dynamic_interact_lambda(mid, cfg) == pytest.approx(
        cfg.lam_interact * (1.0 + 0.5 * cfg.interact_gain)
    )


def test_reference_distance(grasp_clip, claw, cube):
    last = grasp_clip.frames[-1]
    d = reference_hand_object_distance(last)
    assert 0.0 <= d < 0.2
    hand_only = replace(last, obj_pose=None, obj_keypoints=None)
    assert reference_hand_object_distance(hand_only) == math.inf


# ---------------------------------------------------------------------------
# frame reward


def test_perfect_tracking_scores_exactly_one(grasp_clip):
    cfg = RewardConfig()
    for f in grasp_clip.frames:
        r = frame_reward(FramePair(f, f), cfg)
        assert r.total == 1.0
        assert all(v == 1.0 for v in r.components.values())
        assert all(v == 0.0 for v in r.errors.values())
    assert trajectory_mean_reward(grasp_clip, grasp_clip, cfg) == 1.0


def test_component_set_is_fixed(grasp_clip):
    r = frame_reward(FramePair(grasp_clip.frames[0], grasp_clip.frames[0]), RewardConfig())
    assert tuple(r.components) == COMPONENTS


def test_object_position_channel_closed_form(grasp_clip):
    cfg = RewardConfig()
    ref = grasp_clip.frames[-1]
    rolled = shift_frame(ref, obj_dp=np.array([0.02, 0.0, 0.0]))
    r = frame_reward(FramePair(rolled, ref), cfg)
    assert r.errors["obj_pos"] == pytest.approx(0.02, abs=1e-12)
    # lam_obj_pos = 50: a 2 cm error alone contributes exactly 1/e.
    assert r.components["obj_pos"] == pytest.approx(math.exp(-1.0), abs=1e-9)
    # Moving the object also moves its keypoints relative to the static
    # hand, so the interaction channel drops too; the total is the
    # product of all components.
    total = 1.0
    for name in COMPONENTS:
        total *= r.components[name]
    assert r.total == pytest.approx(total, abs=1e-15)


def test_total_is_product_of_components(grasp_clip):
    cfg = RewardConfig()
    rng = rng_(3)
    for f in grasp_clip.frames[::10]:
        rolled = shift_frame(
            f,
            dp=rng.normal(scale=0.01, size=3),
            dtheta=rng.normal(scale=0.05, size=f.theta.shape[0]),
        )
        r = frame_reward(FramePair(rolled, f), cfg)
        prod = 1.0
        for name in COMPONENTS:
            prod *= r.components[name]
        assert r.total == pytest.approx(prod, rel=1e-12)
        assert 0.0 < r.total < 1.0


def test_wrist_rotation_channel(grasp_clip):
    cfg = RewardConfig()
    ref = grasp_clip.frames[0]
    dq = quat_from_axis_angle([0, 0, 1], 0.1)
    from hopkit.geom import quat_mul

    rolled = shift_frame(ref, dq=quat_mul(dq, ref.wrist.orientation))
    r = frame_reward(FramePair(rolled, ref), cfg)
    assert r.errors["wrist_rot"] == pytest.approx(0.1, abs=1e-9)
    assert r.components["wrist_rot"] == pytest.approx(math.exp(-cfg.lam_wrist_rot * 0.1), rel=1e-9)


def test_contact_mismatch_channel(grasp_clip):
    cfg = RewardConfig()
    ref = grasp_clip.frames[-1]  # both fingertips in contact
    rolled = shift_frame(ref, contact=np.array([True, False]))
    r = frame_reward(FramePair(rolled, ref), cfg)
    assert r.errors["contact"] == pytest.approx(0.5)
    assert r.components["contact"] == pytest.approx(math.exp(-cfg.lam_contact * 0.5), rel=1e-12)


def test_regrasp_phase_sharpens_finger_channels(grasp_clip):
    cfg = RewardConfig()
    ref = grasp_clip.frames[-1]
    rolled = shift_frame(ref, dtheta=np.full(ref.theta.shape[0], 0.01))
    loose = frame_reward(FramePair(rolled, ref), cfg, phase="move")
    tight = frame_reward(FramePair(rolled, ref), cfg, phase="regrasp")
    assert loose.components["finger_angle"] == pytest.approx(
        math.exp(-cfg.lam_finger_angle * 0.01), rel=1e-12
    )
    assert tight.components["finger_angle"] == pytest.approx(
        math.exp(-cfg.lam_regrasp_finger_angle * 0.01), rel=1e-12
    )
    assert tight.total < loose.total
    # The phase defaults to the reference frame's label.
    default = frame_reward(FramePair(rolled, ref), cfg)
    assert default.total == pytest.approx(loose.total, rel=1e-12)


def test_reward_rigid_invariance(grasp_clip):
    cfg = RewardConfig()
    rng = rng_(5)
    g = Pose(rng.normal(scale=0.5, size=3), random_quat(rng))
    moved = transform_trajectory(grasp_clip, g)
    rng2 = rng_(6)
    noisy = Trajectory(
        frames=tuple(
            shift_frame(f, dp=rng2.normal(scale=0.005, size=3))
            for f in grasp_clip.frames
        ),
        fps=grasp_clip.fps,
    )
    noisy_moved = transform_trajectory(noisy, g)
    r_orig = trajectory_mean_reward(noisy, grasp_clip, cfg)
    r_moved = trajectory_mean_reward(noisy_moved, moved, cfg)
    assert r_moved == pytest.approx(r_orig, abs=1e-9)
    assert r_orig < 1.0


def test_frame_errors_hand_only(claw, synth_cfg):
    from hopkit.synth import synth_free_move

    t = synth_free_move(synth_cfg, claw, rng_(0))
    e = frame_errors(FramePair(t.frames[0], t.frames[0]))
    assert e["obj_pos"] == 0.0 and e["obj_rot"] == 0.0 and e["interact"] == 0.0


def test_frame_pair_validation(grasp_clip, claw, synth_cfg):
    from hopkit.synth import synth_free_move

    hand_only = synth_free_move(synth_cfg, claw, rng_(0)).frames[0]
    with pytest.raises(ValidationError, match="object presence"):
        FramePair(hand_only, grasp_clip.frames[0])
    bad_dof = replace(grasp_clip.frames[0], theta=np.zeros(2 * grasp_clip.frames[0].theta.shape[0]))
    with pytest.raises(ValidationError, match="DoF"):
        FramePair(bad_dof, grasp_clip.frames[0])


def test_reward_config_validation():
    with pytest.raises(ValidationError, match="velocity"):
        RewardConfig(exclude_velocity_terms=False)
    with pytest.raises(ValidationError, match="interact_near"):
        RewardConfig(interact_near=0.3, interact_far=0.2)
    cfg = RewardConfig.from_dict({"lam_obj_pos": 10.0})
    assert cfg.lam_obj_pos == 10.0
    with pytest.raises(ValidationError, match="unknown reward config"):
        RewardConfig.from_dict({"lam_objpos": 10.0})


# ---------------------------------------------------------------------------
# tracking metrics


def test_tracking_metrics_perfect(grasp_clip):
    m = tracking_metrics(grasp_clip, grasp_clip)
    assert m["obj_pos_err_cm"] == 0.0
    assert m["obj_rot_err_deg"] == 0.0
    assert m["hand_err_cm"] == 0.0
    assert m["success_rate"] == 1.0
    assert m["success_criteria"] == "object"
    assert m["frames"] == len(grasp_clip)


def test_tracking_metrics_half_success(grasp_clip):
    # Push the object 20 cm off for exactly the second half of the clip.
    n = len(grasp_clip)
    frames = list(grasp_clip.frames)
    for i in range(n // 2, n):
        frames[i] = shift_frame(frames[i], obj_dp=np.array([0.2, 0.0, 0.0]))
    rolled = Trajectory(frames=tuple(frames), fps=grasp_clip.fps)
    m = tracking_metrics(rolled, grasp_clip, pos_threshold=0.10)
    assert m["success_rate"] == pytest.approx(0.5)
    assert m["obj_pos_err_cm"] == pytest.approx(0.5 * 20.0, rel=1e-9)


def test_tracking_metrics_rotation_threshold(grasp_clip):
    dq = quat_from_axis_angle([0, 0, 1], np.deg2rad(50.0))
    from hopkit.geom import quat_mul

    frames = tuple(
        replace(f, obj_pose=Pose(f.obj_pose.position, quat_mul(dq, f.obj_pose.orientation)))
        for f in grasp_clip.frames
    )
    rolled = Trajectory(frames=frames, fps=grasp_clip.fps)
    m = tracking_metrics(rolled, grasp_clip, rot_threshold_deg=45.0)
    assert m["success_rate"] == 0.0
    assert m["obj_rot_err_deg"] == pytest.approx(50.0, abs=1e-9)
    relaxed = tracking_metrics(rolled, grasp_clip, rot_threshold_deg=60.0)
    assert relaxed["success_rate"] == 1.0


def test_tracking_metrics_include_hand(grasp_clip):
    frames = tuple(
        replace(f, joints=f.joints + np.array([0.15, 0.0, 0.0])) for f in grasp_clip.frames
    )
    rolled = Trajectory(frames=frames, fps=grasp_clip.fps)
    # Hand error does not trip the object-only criterion...
    obj_only = tracking_metrics(rolled, grasp_clip)
    assert obj_only["success_rate"] == 1.0
    # ...but fails once the hand criterion is included and named.
    with_hand = tracking_metrics(rolled, grasp_clip, include_hand=True)
    assert with_hand["success_rate"] == 0.0
    assert with_hand["success_criteria"] == "object+hand"
    assert with_hand["hand_err_cm"] == pytest.approx(15.0, rel=1e-9)


def test_tracking_metrics_rejects_length_mismatch(grasp_clip):
    short = Trajectory(frames=grasp_clip.frames[:-1], fps=grasp_clip.fps)
    with pytest.raises(ValidationError, match="lengths differ"):
        tracking_metrics(short, grasp_clip)


# ---------------------------------------------------------------------------
# score report


def test_score_report_structure(grasp_clip):
    rep = score_report(grasp_clip, grasp_clip, RewardConfig())
    assert len(rep["per_frame"]) == len(grasp_clip)
    for i, row in enumerate(rep["per_frame"]):
        assert row["frame"] == i
        assert row["total"] == 1.0
        assert tuple(row["components"]) == COMPONENTS
    s = rep["summary"]
    assert s["mean_reward"] == 1.0
    assert s["success_rate"] == 1.0
    assert s["frames"] == len(grasp_clip)
    for key in ("obj_pos_err_cm", "obj_rot_err_deg", "hand_err_cm", "success_criteria"):
        assert key in s


def test_score_report_mean_matches_rows(grasp_clip):
    rng = rng_(9)
    frames = tuple(
        shift_frame(f, dp=rng.normal(scale=0.01, size=3)) for f in grasp_clip.frames
    )
    rolled = Trajectory(frames=frames, fps=grasp_clip.fps)
    rep = score_report(rolled, grasp_clip, RewardConfig())
    mean = np.mean([r["total"] for r in rep["per_frame"]])
    assert rep["summary"]["mean_reward"] == pytest.approx(float(mean), rel=1e-12)
    assert rep["summary"]["mean_reward"] < 1.0
