"""Procedural synthesis of hand-object demonstration trajectories.

Every synthesizer turns static grasp configurations plus light
geometric structure (stable resting poses, a reachable workspace, a
ballistic model) into kinematic demonstration clips:

* free_move: hand flight between two random in-workspace states.
* grasp: approach from a cone-sampled start, fingers closing onto a
  grasp retargeted to a stable resting pose.
* place: exact time reversal of a grasp clip.
* move: object carried between two poses with the grasp held rigid.
* rotate: in-hand rotation of an axis-bearing object under a fixed
  wrist, built from replicated keyframes.
* regrasp / general rotate: greedy nearest-neighbor keyframe chains
  through the grasp set, aligned to a common object pose (regrasp) or a
  common wrist pose (general rotate).
* catch / throw: ballistic object flight into (out of) a static hand;
  throw is the exact reversal of catch.

Clips synthesized with a shared boundary frame compose into longer
demonstrations via :func:`compose`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SynthesisError, ValidationError
from .geom import Pose, lerp_pose, parabola, quat_from_axis_angle, quat_rotate, random_quat, sample_in_cone
from .grasps import GraspConfiguration, GraspSet, contacts_rotatable_region, nearest_grasp, retarget_grasp, transform_grasp
from .kinematics import KinematicTree, forward_kinematics, forward_kinematics_batch
from .scene import ObjectModel, StablePose, Workspace, enumerate_stable_poses, ground_penetration, signed_distance_to_hull

PHASES = (
    "free_move",
    "grasp",
    "place",
    "move",
    "rotate",
    "regrasp",
    "catch",
    "throw",
    "transition",
)


@dataclass(frozen=True)
class Frame:
    """One time step: full hand state plus (optionally) object state.

    ``joints`` are world finger-joint positions and must agree with
    forward kinematics of (wrist, theta); ``obj_keypoints`` must agree
    with the object model posed at ``obj_pose``. ``contact`` holds one
    flag per fingertip. Frames either carry both object fields or
    neither.
    """

    wrist: Pose
    theta: np.ndarray
    joints: np.ndarray
    contact: np.ndarray
    phase: str
    obj_pose: Pose | None = None
    obj_keypoints: np.ndarray | None = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValidationError(f"unknown phase {self.phase!r}")
        theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        joints = np.asarray(self.joints, dtype=np.float64).reshape(-1, 3)
        contact = np.asarray(self.contact, dtype=bool).reshape(-1)
        if (self.obj_pose is None) != (self.obj_keypoints is None):
            raise ValidationError("frames carry both object pose and keypoints, or neither")
        for arr in (theta, joints, contact):
            arr.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "contact", contact)
        if self.obj_keypoints is not None:
            kp = np.asarray(self.obj_keypoints, dtype=np.float64).reshape(-1, 3)
            kp.setflags(write=False)
            object.__setattr__(self, "obj_keypoints", kp)

    @property
    def has_object(self) -> bool:
        return self.obj_pose is not None


@dataclass(frozen=True)
class Trajectory:
    """A fixed-rate frame sequence with provenance metadata."""

    frames: tuple[Frame, ...]
    fps: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) < 2:
            raise ValidationError("trajectory needs at least 2 frames")
        if not self.fps > 0:
            raise ValidationError("fps must be positive")

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs shared by the synthesizers. Defaults give 1 s clips at 60 fps."""

    frames: int = 60
    fps: float = 60.0
    workspace: Workspace = field(default_factory=Workspace)
    # Grasp approach sampling: cone about the object-center -> index-base ray.
    cone_half_angle: float = float(np.deg2rad(30.0))
    cone_radial_range: tuple[float, float] = (0.15, 0.35)
    resample_budget: int = 100
    # Terminal window of contact frames for grasp/catch clips.
    contact_frames: int = 1
    # Sanity cap on wrist motion; keyframe-replicated skills step the
    # wrist between keyframes, so this is a guard, not a physics claim.
    velocity_bound: float = 20.0
    # Simple rotate.
    rotate_keyframes: int = 4
    rotate_max_step: float = float(np.deg2rad(60.0))
    replicate_min: int = 5
    frames_per_radian: float = 40.0
    # General rotate / regrasp chains.
    general_rotate_frames: int = 15
    chain_steps: int = 3
    nearest_w_pos: float = 1.0
    nearest_w_rot: float = 1.0
    nearest_w_theta: float = 1.0
    # Catch / throw.
    gravity: float = 9.8
    catch_clearance_threshold: float = -5e-3
    # Rotatable-region contact predicate.
    contact_eps: float = 8e-3
    min_fingertips: int = 2

    def __post_init__(self):
        if self.frames < 2:
            raise ValidationError("config needs frames >= 2")
        if self.resample_budget < 1:
            raise ValidationError("resample budget must be >= 1")

    @staticmethod
    def from_dict(doc: dict) -> "SynthConfig":
        known = set(SynthConfig.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown synth config keys: {sorted(unknown)}")
        kwargs = dict(doc)
        if "workspace" in kwargs:
            ws = kwargs["workspace"]
            kwargs["workspace"] = Workspace(lo=ws["lo"], hi=ws["hi"])
        if "cone_radial_range" in kwargs:
            kwargs["cone_radial_range"] = tuple(kwargs["cone_radial_range"])
        return SynthConfig(**kwargs)


def replicate_count(delta: float, cfg: SynthConfig) -> int:
    """Frames to hold a keyframe whose rotation gap to its predecessor
    is ``delta`` radians: max(N_min, round(c * |delta|))."""
    return max(int(cfg.replicate_min), int(round(cfg.frames_per_radian * abs(float(delta)))))


def _interp_u(n: int) -> np.ndarray:
    return np.arange(n, dtype=np.float64) / (n - 1)


def _build_frames(
    tree: KinematicTree,
    wrists: list[Pose],
    thetas: np.ndarray,
    contact: np.ndarray,
    phase: str,
    obj_poses: list[Pose] | None = None,
    obj_keypoints: list[np.ndarray] | None = None,
) -> list[Frame]:
    """Assemble frames, computing finger joints by batched FK."""
    n = len(wrists)
    wp = np.stack([w.position for w in wrists])
    wq = np.stack([w.orientation for w in wrists])
    joints = forward_kinematics_batch(tree, wp, wq, thetas)
    frames = []
    for i in range(n):
        frames.append(
            Frame(
                wrist=wrists[i],
                theta=thetas[i],
                joints=joints[i],
                contact=contact[i],
                phase=phase,
                obj_pose=None if obj_poses is None else obj_poses[i],
                obj_keypoints=None if obj_keypoints is None else obj_keypoints[i],
            )
        )
    return frames


def _terminal_contact(cfg: SynthConfig, n: int, tree: KinematicTree) -> np.ndarray:
    contact = np.zeros((n, len(tree.fingertips)), dtype=bool)
    k = max(1, min(int(cfg.contact_frames), n))
    contact[n - k :] = True
    return contact


def synth_free_move(cfg: SynthConfig, tree: KinematicTree, rng: np.random.Generator) -> Trajectory:
    """Hand-only flight: linear wrist path, slerped orientation, linear
    finger angles between two random in-limit states. No object channel."""
    ws = cfg.workspace
    start = Pose(ws.sample_position(rng), random_quat(rng))
    end = Pose(ws.sample_position(rng), random_quat(rng))
    theta0 = rng.uniform(tree.lower_limits, tree.upper_limits)
    theta1 = rng.uniform(tree.lower_limits, tree.upper_limits)
    n = cfg.frames
    us = _interp_u(n)
    wrists = [lerp_pose(start, end, float(u)) for u in us]
    thetas = (1.0 - us)[:, None] * theta0 + us[:, None] * theta1
    contact = np.zeros((n, len(tree.fingertips)), dtype=bool)
    frames = _build_frames(tree, wrists, thetas, contact, "free_move")
    return Trajectory(
        frames=tuple(frames),
        fps=cfg.fps,
        provenance={"skills": ["free_move"], "hand_model": tree.id},
    )


def synth_grasp(
    cfg: SynthConfig,
    tree: KinematicTree,
    grasps: GraspSet,
    obj: ObjectModel,
    rng: np.random.Generator,
    stable_poses: list[StablePose] | None = None,
    grasp_index: int | None = None,
) -> Trajectory:
    """Approach-and-grasp clip.

    Draws a grasp and a stable resting pose, retargets the grasp onto
    it, and interpolates from a start state sampled inside a cone along
    the object-center -> index-finger-base ray (radial range in
    meters), fingers opening from zero to the grasp angles. Attempts
    whose hand keypoints would dip below the ground on any frame are
    rejected and resampled, up to the configured budget.
    """
    stable = stable_poses if stable_poses is not None else enumerate_stable_poses(obj)
    if not stable:
        raise SynthesisError(f"object {obj.id!r} has no stable resting pose")
    idx_base = tree.keypoint_index("index_base")
    n = cfg.frames
    us = _interp_u(n)
    for _ in range(cfg.resample_budget):
        gi = int(rng.integers(len(grasps))) if grasp_index is None else int(grasp_index)
        h = stable[int(rng.integers(len(stable)))]
        g_end = retarget_grasp(grasps[gi], h.pose)
        if ground_penetration(g_end.joints) > 0.0:
            continue
        ray = g_end.joints[idx_base] - g_end.obj_pose.position
        if np.linalg.norm(ray) < 1e-9:
            continue
        start_pos = sample_in_cone(
            g_end.obj_pose.position, ray, cfg.cone_half_angle, cfg.cone_radial_range, rng
        )
        positions = (1.0 - us)[:, None] * start_pos + us[:, None] * g_end.wrist.position
        positions[-1] = g_end.wrist.position
        wrists = [Pose(p, g_end.wrist.orientation) for p in positions]
        thetas = us[:, None] * g_end.theta
        contact = _terminal_contact(cfg, n, tree)
        obj_poses = [g_end.obj_pose] * n
        obj_kps = [g_end.obj_keypoints] * n
        frames = _build_frames(tree, wrists, thetas, contact, "grasp", obj_poses, obj_kps)
        if min(f.joints[:, 2].min() for f in frames) < 0.0:
            continue
        return Trajectory(
            frames=tuple(frames),
            fps=cfg.fps,
            provenance={
                "skills": ["grasp"],
                "hand_model": tree.id,
                "object": obj.id,
                "scale": obj.scale,
                "grasp_index": gi,
            },
        )
    raise SynthesisError(
        f"grasp synthesis exhausted its resample budget ({cfg.resample_budget})"
    )


def reverse_trajectory(traj: Trajectory, phase: str | None = None, skill: str | None = None) -> Trajectory:
    """Exact time reversal. Pose fields are copied bit-for-bit; only the
    frame order (and optionally the phase label) changes."""
    frames = tuple(
        replace(f, phase=phase if phase is not None else f.phase)
        for f in reversed(traj.frames)
    )
    provenance = dict(traj.provenance)
    if skill is not None:
        provenance["skills"] = [skill]
    provenance["time_reversed"] = not traj.provenance.get("time_reversed", False)
    return Trajectory(frames=frames, fps=traj.fps, provenance=provenance)


def synth_place(
    cfg: SynthConfig,
    tree: KinematicTree,
    grasps: GraspSet,
    obj: ObjectModel,
    rng: np.random.Generator,
    stable_poses: list[StablePose] | None = None,
    grasp_index: int | None = None,
) -> Trajectory:
    """Placing clip: the exact time reversal of a grasp clip drawn from
    the same generator state (frame t here equals grasp frame T-1-t)."""
    g = synth_grasp(cfg, tree, grasps, obj, rng, stable_poses, grasp_index)
    return reverse_trajectory(g, phase="place", skill="place")


def synth_move(
    cfg: SynthConfig,
    tree: KinematicTree,
    obj: ObjectModel,
    rng: np.random.Generator,
    grasps: GraspSet | None = None,
    start_frame: Frame | None = None,
    end_frame: Frame | None = None,
) -> Trajectory:
    """Object transport under a rigid grasp.

    The object pose interpolates (linear + slerp) between its start and
    end pose while the wrist keeps a constant transform relative to the
    object. Boundary frames pin the corresponding end of the clip
    exactly, which makes move clips composable with grasp/place clips.
    """
    if start_frame is not None:
        if not start_frame.has_object:
            raise ValidationError("move start frame must carry an object")
        rel = start_frame.obj_pose.inverse().compose(start_frame.wrist)
        theta = np.asarray(start_frame.theta)
        pose0 = start_frame.obj_pose
    else:
        if grasps is None:
            raise ValidationError("move needs a grasp set when no start frame is given")
        g = grasps[int(rng.integers(len(grasps)))]
        rel = g.wrist_in_object()
        theta = g.theta
        pose0 = Pose(cfg.workspace.sample_position(rng), random_quat(rng))
    if end_frame is not None:
        if not end_frame.has_object:
            raise ValidationError("move end frame must carry an object")
        pose1 = end_frame.obj_pose
        rel_end = end_frame.obj_pose.inverse().compose(end_frame.wrist)
        if not rel.almost_equal(rel_end, 1e-9, 1e-9):
            raise ValidationError("move boundary frames hold incompatible grasps")
        if np.max(np.abs(theta - np.asarray(end_frame.theta))) > 1e-9:
            raise ValidationError("move boundary frames hold different finger angles")
    else:
        pose1 = Pose(cfg.workspace.sample_position(rng), random_quat(rng))

    n = cfg.frames
    us = _interp_u(n)
    obj_poses = [lerp_pose(pose0, pose1, float(u)) for u in us]
    wrists = [p.compose(rel) for p in obj_poses]
    thetas = np.broadcast_to(theta, (n, theta.shape[0]))
    contact = np.ones((n, len(tree.fingertips)), dtype=bool)
    obj_kps = [p.apply(obj.keypoints) for p in obj_poses]
    frames = _build_frames(tree, wrists, thetas, contact, "move", obj_poses, obj_kps)
    if start_frame is not None:
        frames[0] = replace(start_frame, phase="move")
    if end_frame is not None:
        frames[-1] = replace(end_frame, phase="move")
    return Trajectory(
        frames=tuple(frames),
        fps=cfg.fps,
        provenance={
            "skills": ["move"],
            "hand_model": tree.id,
            "object": obj.id,
            "scale": obj.scale,
            # Trainers are expected to apply random object wrenches on
            # top of move tracking; synthesis itself stays kinematic.
            "train_hints": {"random_object_wrench": True},
        },
    )


def _rotate_about_object_axis(obj_pose: Pose, axis: np.ndarray, anchor: np.ndarray, delta: float) -> Pose:
    """Rotate an object pose about its own (object-frame) axis line
    through ``anchor`` by ``delta`` radians."""
    q = quat_from_axis_angle(axis, delta)
    local = Pose(anchor - quat_rotate(q, anchor), q)
    return obj_pose.compose(local)


def _frame_contacts_region(
    frame: Frame, tree: KinematicTree, obj: ObjectModel, cfg: SynthConfig
) -> bool:
    tips = frame.joints[list(tree.fingertips)]
    tips_obj = frame.obj_pose.inverse().apply(tips)
    dists = obj.rotatable.distance(tips_obj, obj.axis)
    return int(np.sum(dists <= cfg.contact_eps)) >= cfg.min_fingertips


def synth_rotate_simple(
    cfg: SynthConfig,
    tree: KinematicTree,
    grasps: GraspSet,
    obj: ObjectModel,
    rng: np.random.Generator,
    start_frame: Frame | None = None,
) -> Trajectory:
    """In-hand rotation about the object's axis under a fixed wrist.

    Only grasps touching the rotatable region qualify. Keyframes rotate
    the object by random angles (up to the configured step) about its
    axis; each keyframe is held for max(N_min, round(c * gap)) frames.
    Every keyframe must keep the fingertips on the rotatable region.
    """
    if obj.axis is None or obj.rotatable is None:
        raise SynthesisError(f"object {obj.id!r} has no rotatable region/axis")
    anchor = (
        obj.rotatable.axis_point
        if obj.rotatable.axis_point is not None
        else np.zeros(3)
    )
    if start_frame is not None:
        if not start_frame.has_object:
            raise ValidationError("rotate start frame must carry an object")
        if not _frame_contacts_region(start_frame, tree, obj, cfg):
            raise SynthesisError("rotate start frame does not touch the rotatable region")
        wrist, theta, pose0 = start_frame.wrist, np.asarray(start_frame.theta), start_frame.obj_pose
    else:
        candidates = [
            i
            for i in range(len(grasps))
            if contacts_rotatable_region(grasps[i], tree, obj, cfg.contact_eps, cfg.min_fingertips)
        ]
        if not candidates:
            raise SynthesisError(
                f"no grasp touches the rotatable region of object {obj.id!r}"
            )
        g = grasps[candidates[int(rng.integers(len(candidates)))]]
        wrist, theta, pose0 = g.wrist, g.theta, g.obj_pose

    k = max(2, int(cfg.rotate_keyframes))
    tips_world = forward_kinematics(tree, wrist, theta)[list(tree.fingertips)]
    for _ in range(cfg.resample_budget):
        poses = [pose0]
        deltas = [0.0]
        ok = True
        for _step in range(k - 1):
            delta = float(rng.uniform(-cfg.rotate_max_step, cfg.rotate_max_step))
            poses.append(_rotate_about_object_axis(poses[-1], obj.axis, anchor, delta))
            deltas.append(delta)
        counts = [replicate_count(d, cfg) if i else cfg.replicate_min for i, d in enumerate(deltas)]
        # Fingertips must stay on the region at every keyframe (true by
        # symmetry for cylindrical regions, checked for point regions).
        for pose in poses:
            tips_obj = pose.inverse().apply(tips_world)
            if int(np.sum(obj.rotatable.distance(tips_obj, obj.axis) <= cfg.contact_eps)) < cfg.min_fingertips:
                ok = False
                break
        if not ok:
            continue
        wrists = []
        thetas = []
        obj_poses = []
        obj_kps = []
        for pose, count in zip(poses, counts):
            kp = pose.apply(obj.keypoints)
            for _i in range(count):
                wrists.append(wrist)
                thetas.append(theta)
                obj_poses.append(pose)
                obj_kps.append(kp)
        thetas = np.asarray(thetas)
        contact = np.ones((len(wrists), len(tree.fingertips)), dtype=bool)
        frames = _build_frames(tree, wrists, thetas, contact, "rotate", obj_poses, obj_kps)
        if start_frame is not None:
            frames[0] = replace(start_frame, phase="rotate")
        return Trajectory(
            frames=tuple(frames),
            fps=cfg.fps,
            provenance={
                "skills": ["rotate"],
                "hand_model": tree.id,
                "object": obj.id,
                "scale": obj.scale,
                "keyframe_deltas": [float(d) for d in deltas],
                "keyframe_counts": [int(c) for c in counts],
            },
        )
    raise SynthesisError(
        f"rotate synthesis exhausted its resample budget ({cfg.resample_budget})"
    )


def _greedy_chain(cfg: SynthConfig, grasps: GraspSet, steps: int, rng: np.random.Generator) -> list[int]:
    """Random start, then greedy nearest-neighbor steps without
    replacement under the object-centric grasp metric."""
    if len(grasps) < steps + 1:
        raise SynthesisError(
            f"chain of {steps} steps needs {steps + 1} grasps, set has {len(grasps)}"
        )
    chain = [int(rng.integers(len(grasps)))]
    visited = set(chain)
    for _ in range(steps):
        nxt = nearest_grasp(
            grasps[chain[-1]],
            grasps,
            cfg.nearest_w_pos,
            cfg.nearest_w_rot,
            cfg.nearest_w_theta,
            exclude=visited,
        )
        chain.append(nxt)
        visited.add(nxt)
    return chain


def _keyframe_replicated(
    cfg: SynthConfig,
    tree: KinematicTree,
    obj: ObjectModel,
    keyframes: list[GraspConfiguration],
    phase: str,
    skill: str,
    chain: list[int],
) -> Trajectory:
    wrists = []
    thetas = []
    obj_poses = []
    obj_kps = []
    for g in keyframes:
        kp = g.obj_pose.apply(obj.keypoints)
        for _ in range(int(cfg.general_rotate_frames)):
            wrists.append(g.wrist)
            thetas.append(g.theta)
            obj_poses.append(g.obj_pose)
            obj_kps.append(kp)
    thetas = np.asarray(thetas)
    contact = np.ones((len(wrists), len(tree.fingertips)), dtype=bool)
    frames = _build_frames(tree, wrists, thetas, contact, phase, obj_poses, obj_kps)
    return Trajectory(
        frames=tuple(frames),
        fps=cfg.fps,
        provenance={
            "skills": [skill],
            "hand_model": tree.id,
            "object": obj.id,
            "scale": obj.scale,
            "chain": [int(i) for i in chain],
        },
    )


def synth_rotate_general(
    cfg: SynthConfig,
    tree: KinematicTree,
    grasps: GraspSet,
    obj: ObjectModel,
    rng: np.random.Generator,
    steps: int | None = None,
) -> Trajectory:
    """Axis-free in-hand reorientation: chain nearby grasps, align all
    keyframes to the first keyframe's wrist, hold each for a fixed
    number of frames. The object pose varies across keyframes; the
    wrist does not."""
    steps = cfg.chain_steps if steps is None else int(steps)
    chain = _greedy_chain(cfg, grasps, steps, rng)
    g1 = grasps[chain[0]]
    keyframes = []
    for i in chain:
        gi = grasps[i]
        aligned = transform_grasp(gi, g1.wrist.compose(gi.wrist.inverse()))
        # Re-anchor on the shared wrist exactly; FK-derived fields are
        # rebuilt downstream from (wrist, theta).
        aligned = replace(aligned, wrist=g1.wrist)
        keyframes.append(aligned)
    return _keyframe_replicated(cfg, tree, obj, keyframes, "rotate", "general_rotate", chain)


def synth_regrasp(
    cfg: SynthConfig,
    tree: KinematicTree,
    grasps: GraspSet,
    obj: ObjectModel,
    rng: np.random.Generator,
    steps: int | None = None,
) -> Trajectory:
    """Hand repositioning on a static object: the same greedy chain as
    general rotate, but keyframes are aligned to the first keyframe's
    object pose, so the object stays fixed while the hand jumps."""
    steps = cfg.chain_steps if steps is None else int(steps)
    chain = _greedy_chain(cfg, grasps, steps, rng)
    g1 = grasps[chain[0]]
    keyframes = []
    for i in chain:
        gi = grasps[i]
        aligned = transform_grasp(gi, g1.obj_pose.compose(gi.obj_pose.inverse()))
        aligned = replace(aligned, obj_pose=g1.obj_pose, obj_keypoints=g1.obj_keypoints)
        keyframes.append(aligned)
    return _keyframe_replicated(cfg, tree, obj, keyframes, "regrasp", "regrasp", chain)


def synth_catch(
    cfg: SynthConfig,
    tree: KinematicTree,
    grasps: GraspSet,
    obj: ObjectModel,
    rng: np.random.Generator,
    end_frame: Frame | None = None,
) -> Trajectory:
    """Ballistic catch: the object flies along a parabola into a static
    open hand whose pose equals the terminal grasp's wrist; fingers
    close linearly over the clip. Attempts where any pre-grasp frame
    penetrates the object hull beyond the clearance threshold are
    resampled."""
    n = cfg.frames
    us = _interp_u(n)
    flight_time = (n - 1) / cfg.fps
    for _ in range(cfg.resample_budget):
        if end_frame is not None:
            if not end_frame.has_object:
                raise ValidationError("catch end frame must carry an object")
            g_end = GraspConfiguration(
                wrist=end_frame.wrist,
                theta=end_frame.theta,
                joints=end_frame.joints,
                obj_pose=end_frame.obj_pose,
                obj_keypoints=end_frame.obj_keypoints,
                hand_model=tree.id,
                object_id=obj.id,
            )
        else:
            g = grasps[int(rng.integers(len(grasps)))]
            target = Pose(cfg.workspace.sample_position(rng), random_quat(rng))
            g_end = retarget_grasp(g, target)
        p_start = cfg.workspace.sample_position(rng)
        q_start = random_quat(rng)
        path = parabola(
            p_start,
            g_end.obj_pose.position,
            flight_time,
            cfg.gravity,
            cfg.fps,
            q_start,
            g_end.obj_pose.orientation,
        )
        if len(path) != n:
            raise SynthesisError("frame count / fps mismatch in ballistic path")
        path[-1] = g_end.obj_pose
        wrists = [g_end.wrist] * n
        thetas = us[:, None] * g_end.theta
        contact = _terminal_contact(cfg, n, tree)
        obj_kps = [p.apply(obj.keypoints) for p in path[:-1]] + [g_end.obj_keypoints]
        frames = _build_frames(tree, wrists, thetas, contact, "catch", path, obj_kps)
        clear = min(
            float(signed_distance_to_hull(frames[t].joints, obj, path[t]).min())
            for t in range(n - 1)
        )
        if clear < cfg.catch_clearance_threshold:
            continue
        return Trajectory(
            frames=tuple(frames),
            fps=cfg.fps,
            provenance={
                "skills": ["catch"],
                "hand_model": tree.id,
                "object": obj.id,
                "scale": obj.scale,
                "min_pregrasp_clearance": clear,
            },
        )
    raise SynthesisError(
        f"catch synthesis exhausted its resample budget ({cfg.resample_budget})"
    )


def synth_throw(
    cfg: SynthConfig,
    tree: KinematicTree,
    grasps: GraspSet,
    obj: ObjectModel,
    rng: np.random.Generator,
    start_frame: Frame | None = None,
) -> Trajectory:
    """Throw: the exact time reversal of a catch clip (object leaves the
    opening hand on a ballistic arc). Frame 0 is a contact frame."""
    c = synth_catch(cfg, tree, grasps, obj, rng, end_frame=start_frame)
    return reverse_trajectory(c, phase="throw", skill="throw")


def compose(
    clips: list[Trajectory],
    pos_tol: float = 1e-3,
    ang_tol: float = float(np.deg2rad(1.0)),
) -> Trajectory:
    """Concatenate clips whose boundary frames agree.

    Adjacent clips must share fps and agree at the junction in every
    pose field (wrist and object position within ``pos_tol`` meters,
    orientations within ``ang_tol`` radians, finger angles within
    ``ang_tol``). The duplicated junction frame is dropped (the earlier
    clip's copy is kept), so the result has sum(len) - (len(clips) - 1)
    frames.
    """
    if not clips:
        raise ValidationError("compose needs at least one clip")
    fps = clips[0].fps
    frames: list[Frame] = list(clips[0].frames)
    skills: list[str] = list(clips[0].provenance.get("skills", []))
    for ci in range(1, len(clips)):
        clip = clips[ci]
        if clip.fps != fps:
            raise ValidationError(f"clip {ci}: fps {clip.fps} differs from {fps}")
        a = frames[-1]
        b = clip.frames[0]
        problems = []
        if np.linalg.norm(a.wrist.position - b.wrist.position) > pos_tol:
            problems.append("wrist position")
        if not a.wrist.almost_equal(b.wrist, np.inf, ang_tol):
            problems.append("wrist orientation")
        if a.theta.shape != b.theta.shape or np.max(np.abs(a.theta - b.theta), initial=0.0) > ang_tol:
            problems.append("finger angles")
        if a.has_object != b.has_object:
            problems.append("object presence")
        elif a.has_object:
            if np.linalg.norm(a.obj_pose.position - b.obj_pose.position) > pos_tol:
                problems.append("object position")
            if not a.obj_pose.almost_equal(b.obj_pose, np.inf, ang_tol):
                problems.append("object orientation")
        if problems:
            raise ValidationError(
                f"clips {ci - 1} and {ci} disagree at the junction: {', '.join(problems)}"
            )
        frames.extend(clip.frames[1:])
        skills.extend(clip.provenance.get("skills", []))
    provenance = dict(clips[0].provenance)
    provenance["skills"] = skills
    provenance.pop("time_reversed", None)
    return Trajectory(frames=tuple(frames), fps=fps, provenance=provenance)


CHAIN_STARTERS = ("grasp", "catch")


def _grasp_from_frame(frame: Frame, tree: KinematicTree, obj: ObjectModel) -> GraspConfiguration:
    """The grasp a contact frame is holding, as a retargetable snapshot."""
    if not frame.has_object:
        raise ValidationError("frame has no object channel to derive a grasp from")
    return GraspConfiguration(
        wrist=frame.wrist,
        theta=frame.theta,
        joints=frame.joints,
        obj_pose=frame.obj_pose,
        obj_keypoints=frame.obj_keypoints,
        hand_model=tree.id,
        object_id=obj.id,
    )


def synth_chain(
    cfg: SynthConfig,
    tree: KinematicTree,
    grasps: GraspSet,
    obj: ObjectModel,
    rng: np.random.Generator,
    skills: list[str],
) -> Trajectory:
    """Synthesize a multi-skill demonstration as pinned pieces.

    Supported sequences: start with ``grasp`` or ``catch``; continue
    with ``move`` (start-pinned), ``rotate`` (in place), ``place``
    (after ``move``, which is then end-pinned onto it, or directly
    after ``grasp``), and a terminal ``throw``. Single-skill lists
    dispatch to the plain synthesizer.
    """
    if not skills:
        raise ValidationError("empty skill list")
    if len(skills) == 1:
        return synth_skill(cfg, tree, grasps, obj, rng, skills[0])
    if skills[0] not in CHAIN_STARTERS:
        raise ValidationError(
            f"chains must start with one of {CHAIN_STARTERS}, got {skills[0]!r}"
        )
    stable = enumerate_stable_poses(obj)
    pieces: list[Trajectory] = []
    i = 0
    while i < len(skills):
        s = skills[i]
        carry = pieces[-1].frames[-1] if pieces else None
        if s == "grasp":
            if pieces:
                raise ValidationError("'grasp' is only supported as the first chain skill")
            pieces.append(synth_grasp(cfg, tree, grasps, obj, rng, stable))
        elif s == "catch":
            if pieces:
                raise ValidationError("'catch' is only supported as the first chain skill")
            pieces.append(synth_catch(cfg, tree, grasps, obj, rng))
        elif s == "move":
            if i + 1 < len(skills) and skills[i + 1] == "place":
                # The place must descend from the grasp as currently
                # held: intervening skills (rotate, regrasp) change the
                # wrist-object transform, so the original index is stale.
                held = _grasp_from_frame(carry, tree, obj)
                held_set = GraspSet(grasps=(held,), hand_model=tree.id, object_id=obj.id)
                placed = synth_place(cfg, tree, held_set, obj, rng, stable, grasp_index=0)
                pieces.append(
                    synth_move(
                        cfg, tree, obj, rng,
                        start_frame=carry, end_frame=placed.frames[0],
                    )
                )
                pieces.append(placed)
                i += 2
                continue
            pieces.append(synth_move(cfg, tree, obj, rng, start_frame=carry))
        elif s == "rotate":
            pieces.append(synth_rotate_simple(cfg, tree, grasps, obj, rng, start_frame=carry))
        elif s == "place":
            if len(pieces) == 1 and skills[0] == "grasp":
                pieces.append(reverse_trajectory(pieces[0], phase="place", skill="place"))
            else:
                raise ValidationError("'place' must follow 'grasp' or 'move'")
        elif s == "throw":
            if i != len(skills) - 1:
                raise ValidationError("'throw' must be the final chain skill")
            pieces.append(synth_throw(cfg, tree, grasps, obj, rng, start_frame=carry))
        else:
            raise ValidationError(f"skill {s!r} is not supported inside chains")
        i += 1
    return compose(pieces)


def synth_skill(
    cfg: SynthConfig,
    tree: KinematicTree,
    grasps: GraspSet | None,
    obj: ObjectModel | None,
    rng: np.random.Generator,
    skill: str,
) -> Trajectory:
    """Dispatch a single skill by name."""
    if skill == "free_move":
        return synth_free_move(cfg, tree, rng)
    if grasps is None or obj is None:
        raise ValidationError(f"skill {skill!r} requires a grasp set and an object")
    table = {
        "grasp": synth_grasp,
        "place": synth_place,
        "move": lambda c, t, g, o, r: synth_move(c, t, o, r, grasps=g),
        "rotate": synth_rotate_simple,
        "general_rotate": synth_rotate_general,
        "regrasp": synth_regrasp,
        "catch": synth_catch,
        "throw": synth_throw,
    }
    if skill not in table:
        raise ValidationError(f"unknown skill {skill!r}")
    return table[skill](cfg, tree, grasps, obj, rng)


def trajectory_issues(
    traj: Trajectory,
    tree: KinematicTree | None = None,
    obj: ObjectModel | None = None,
    fk_tol: float = 5e-3,
    kp_tol: float = 1e-6,
    velocity_bound: float | None = 20.0,
) -> list[str]:
    """Invariant violations for a trajectory; empty list means valid.

    With a hand model, finger joints are checked against forward
    kinematics and contact flag width against the fingertip count; with
    an object model (at the trajectory's recorded scale), world object
    keypoints are checked against the posed model.
    """
    issues: list[str] = []
    frames = traj.frames
    if len(frames) < 2:
        issues.append("trajectory has fewer than 2 frames")
        return issues
    f0 = frames[0]
    for t, f in enumerate(frames):
        if f.theta.shape != f0.theta.shape:
            issues.append(f"frame {t}: inconsistent DoF count")
        if f.joints.shape != f0.joints.shape:
            issues.append(f"frame {t}: inconsistent joint count")
        if f.contact.shape != f0.contact.shape:
            issues.append(f"frame {t}: inconsistent contact width")
        if f.has_object != f0.has_object:
            issues.append(f"frame {t}: object channel appears/disappears")
        if f.has_object and f0.has_object and f.obj_keypoints.shape != f0.obj_keypoints.shape:
            issues.append(f"frame {t}: inconsistent object keypoint count")
    if issues:
        return issues
    if tree is not None:
        if f0.theta.shape != (tree.dof,):
            issues.append(f"frames carry {f0.theta.shape[0]} angles, hand has {tree.dof}")
        elif f0.joints.shape != (tree.n_joints, 3):
            issues.append(f"frames carry {f0.joints.shape[0]} joints, hand has {tree.n_joints}")
        else:
            wp = np.stack([f.wrist.position for f in frames])
            wq = np.stack([f.wrist.orientation for f in frames])
            th = np.stack([f.theta for f in frames])
            fk = forward_kinematics_batch(tree, wp, wq, th)
            for t, f in enumerate(frames):
                err = float(np.linalg.norm(fk[t] - f.joints, axis=1).max())
                if err > fk_tol:
                    issues.append(f"frame {t}: finger joints deviate from FK by {err:.4g} m")
            if f0.contact.shape != (len(tree.fingertips),):
                issues.append(
                    f"contact width {f0.contact.shape[0]} != fingertip count {len(tree.fingertips)}"
                )
    if obj is not None and f0.has_object:
        if f0.obj_keypoints.shape != obj.keypoints.shape:
            issues.append(
                f"frames carry {f0.obj_keypoints.shape[0]} object keypoints, "
                f"object has {obj.keypoints.shape[0]}"
            )
        else:
            for t, f in enumerate(frames):
                err = float(
                    np.linalg.norm(obj.world_keypoints(f.obj_pose) - f.obj_keypoints, axis=1).max()
                )
                if err > kp_tol:
                    issues.append(f"frame {t}: object keypoints deviate from pose by {err:.4g} m")
    if velocity_bound is not None:
        step_cap = velocity_bound / traj.fps
        for t in range(1, len(frames)):
            step = float(np.linalg.norm(frames[t].wrist.position - frames[t - 1].wrist.position))
            if step > step_cap:
                issues.append(
                    f"frame {t}: wrist moved {step:.4g} m in one frame (cap {step_cap:.4g})"
                )
    for t, f in enumerate(frames):
        if f.phase not in PHASES:
            issues.append(f"frame {t}: unknown phase {f.phase!r}")
    return issues
