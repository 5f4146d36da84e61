"""Static grasp configurations and grasp-set operations.

A grasp snapshot ties together the wrist pose, flat finger angles,
world finger-joint positions, the object pose, and the object's world
keypoints. Grasp sets load from JSON and validate against the hand
model (forward-kinematics consistency) and the object model (keypoint
consistency, joint limits).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import ValidationError
from .geom import Pose, geodesic_angle
from .kinematics import KinematicTree, forward_kinematics
from .scene import ObjectModel

FK_TOLERANCE = 5e-3  # meters; finger joints must match FK this closely
KEYPOINT_TOLERANCE = 1e-6  # meters; object keypoints vs posed model keypoints


@dataclass(frozen=True)
class GraspConfiguration:
    """One static grasp: hand state plus object state at grasp time."""

    wrist: Pose
    theta: np.ndarray
    joints: np.ndarray
    obj_pose: Pose
    obj_keypoints: np.ndarray
    hand_model: str = "hand"
    object_id: str = "object"

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        joints = np.asarray(self.joints, dtype=np.float64).reshape(-1, 3)
        kp = np.asarray(self.obj_keypoints, dtype=np.float64).reshape(-1, 3)
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(joints)) and np.all(np.isfinite(kp))):
            raise ValidationError("grasp fields must be finite")
        for arr in (theta, joints, kp):
            arr.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "obj_keypoints", kp)

    def fingertip_positions(self, tree: KinematicTree) -> np.ndarray:
        return self.joints[list(tree.fingertips)]

    def wrist_in_object(self) -> Pose:
        """Wrist pose expressed in the object frame (the grasp's shape)."""
        return self.obj_pose.inverse().compose(self.wrist)


def grasp_issues(
    g: GraspConfiguration,
    tree: KinematicTree,
    obj: ObjectModel,
    fk_tol: float = FK_TOLERANCE,
    kp_tol: float = KEYPOINT_TOLERANCE,
) -> list[str]:
    """Invariant violations for one grasp; empty list means valid."""
    issues = []
    if g.theta.shape != (tree.dof,):
        issues.append(f"theta has {g.theta.shape[0]} angles, hand {tree.id!r} has {tree.dof}")
        return issues
    if g.joints.shape != (tree.n_joints, 3):
        issues.append(
            f"joints shaped {g.joints.shape}, hand {tree.id!r} has {tree.n_joints} joints"
        )
        return issues
    if not tree.check_limits(g.theta):
        issues.append("finger angles violate joint limits")
    fk = forward_kinematics(tree, g.wrist, g.theta)
    err = float(np.linalg.norm(fk - g.joints, axis=1).max())
    if err > fk_tol:
        issues.append(f"finger joints deviate from forward kinematics by {err:.4g} m")
    if g.obj_keypoints.shape != obj.keypoints.shape:
        issues.append(
            f"object keypoints shaped {g.obj_keypoints.shape}, object has {obj.keypoints.shape}"
        )
        return issues
    expected = obj.world_keypoints(g.obj_pose)
    kerr = float(np.linalg.norm(expected - g.obj_keypoints, axis=1).max())
    if kerr > kp_tol:
        issues.append(f"object keypoints deviate from posed model by {kerr:.4g} m")
    return issues


@dataclass(frozen=True)
class GraspSet:
    """Non-empty collection of grasps for one (hand, object) pairing."""

    grasps: tuple[GraspConfiguration, ...]
    hand_model: str
    object_id: str

    def __post_init__(self):
        if len(self.grasps) == 0:
            raise ValidationError("grasp set must be non-empty")
        for i, g in enumerate(self.grasps):
            if g.hand_model != self.hand_model or g.object_id != self.object_id:
                raise ValidationError(
                    f"grasp {i} is for ({g.hand_model}, {g.object_id}), "
                    f"set is for ({self.hand_model}, {self.object_id})"
                )

    def __len__(self) -> int:
        return len(self.grasps)

    def __getitem__(self, i: int) -> GraspConfiguration:
        return self.grasps[i]

    def __iter__(self):
        return iter(self.grasps)


def _pose_from_doc(doc: dict, where: str) -> Pose:
    try:
        return Pose(np.asarray(doc["p"], dtype=np.float64), np.asarray(doc["q"], dtype=np.float64))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: bad pose ({exc})") from exc


def _pose_to_doc(pose: Pose) -> dict:
    return {"p": pose.position.tolist(), "q": pose.orientation.tolist()}


def grasp_from_dict(doc: dict, hand_model: str, object_id: str, where: str) -> GraspConfiguration:
    try:
        return GraspConfiguration(
            wrist=_pose_from_doc(doc["wrist"], f"{where}.wrist"),
            theta=doc["theta"],
            joints=doc["joints"],
            obj_pose=_pose_from_doc(doc["obj"], f"{where}.obj"),
            obj_keypoints=doc["obj_kp"],
            hand_model=hand_model,
            object_id=object_id,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def grasp_to_dict(g: GraspConfiguration) -> dict:
    return {
        "wrist": _pose_to_doc(g.wrist),
        "theta": g.theta.tolist(),
        "joints": g.joints.tolist(),
        "obj": _pose_to_doc(g.obj_pose),
        "obj_kp": g.obj_keypoints.tolist(),
    }


def grasp_set_to_dict(gs: GraspSet) -> dict:
    return {
        "hand_model": gs.hand_model,
        "object": gs.object_id,
        "grasps": [grasp_to_dict(g) for g in gs],
    }


def load_grasp_set(
    path: str,
    tree: KinematicTree,
    obj: ObjectModel,
    strict: bool = True,
) -> GraspSet:
    """Load and validate a grasp-set JSON file.

    In strict mode any invalid entry raises with the entry index and
    the reasons; in lenient mode invalid entries are dropped (loading
    still fails if nothing survives).
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        hand_model = str(doc["hand_model"])
        object_id = str(doc["object"])
        raw = list(doc["grasps"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed grasp file: {exc}") from exc
    if hand_model != tree.id:
        raise ValidationError(f"grasp file is for hand {hand_model!r}, got tree {tree.id!r}")
    if object_id != obj.id:
        raise ValidationError(f"grasp file is for object {object_id!r}, got {obj.id!r}")
    kept: list[GraspConfiguration] = []
    problems: list[str] = []
    for i, gdoc in enumerate(raw):
        try:
            g = grasp_from_dict(gdoc, hand_model, object_id, f"grasps[{i}]")
            issues = grasp_issues(g, tree, obj)
        except ValidationError as exc:
            issues = list(exc.issues)
        if issues:
            problems.extend(f"grasps[{i}]: {msg}" for msg in issues)
        else:
            kept.append(g)
    if strict and problems:
        raise ValidationError(f"{len(problems)} invalid grasp entr(ies) in {path}", problems)
    if not kept:
        raise ValidationError(f"no valid grasps in {path}", problems)
    return GraspSet(grasps=tuple(kept), hand_model=hand_model, object_id=object_id)


def transform_grasp(g: GraspConfiguration, world_tf: Pose) -> GraspConfiguration:
    """Apply one rigid transform to every world-frame field of a grasp.

    Finger angles are unchanged; the hand-object relationship is
    preserved exactly (the transform acts on hand and object alike).
    """
    return replace(
        g,
        wrist=world_tf.compose(g.wrist),
        joints=world_tf.apply(g.joints),
        obj_pose=world_tf.compose(g.obj_pose),
        obj_keypoints=world_tf.apply(g.obj_keypoints),
    )


def retarget_grasp(g: GraspConfiguration, target_obj_pose: Pose) -> GraspConfiguration:
    """Move a grasp so its object sits at ``target_obj_pose``.

    The rigid transform ``target o inverse(current object pose)`` is
    applied to all world fields, which keeps the relative hand-object
    configuration constant. Retargeting to the current object pose is
    the identity (up to float round-off).
    """
    return transform_grasp(g, target_obj_pose.compose(g.obj_pose.inverse()))


def grasp_distance(
    a: GraspConfiguration,
    b: GraspConfiguration,
    w_pos: float = 1.0,
    w_rot: float = 1.0,
    w_theta: float = 1.0,
) -> float:
    """Weighted object-centric distance between two grasps.

    Both wrists are first expressed in their own object's frame, so the
    metric only sees the grasp shape, never where the object happens to
    be in the world: d = w_pos * |dp| + w_rot * geodesic + w_theta *
    mean |dtheta|.
    """
    ra = a.wrist_in_object()
    rb = b.wrist_in_object()
    d_pos = float(np.linalg.norm(ra.position - rb.position))
    d_rot = geodesic_angle(ra.orientation, rb.orientation)
    if a.theta.shape != b.theta.shape:
        raise ValidationError("cannot compare grasps with different DoF counts")
    d_theta = float(np.mean(np.abs(a.theta - b.theta))) if a.theta.size else 0.0
    return w_pos * d_pos + w_rot * d_rot + w_theta * d_theta


def nearest_grasp(
    g: GraspConfiguration,
    pool,
    w_pos: float = 1.0,
    w_rot: float = 1.0,
    w_theta: float = 1.0,
    exclude: set[int] | None = None,
) -> int:
    """Index of the pool grasp closest to ``g`` (ties -> lowest index)."""
    best = -1
    best_d = np.inf
    for i, cand in enumerate(pool):
        if exclude and i in exclude:
            continue
        d = grasp_distance(g, cand, w_pos, w_rot, w_theta)
        if d < best_d:
            best = i
            best_d = d
    if best < 0:
        raise ValidationError("nearest_grasp: empty candidate pool")
    return best


def contacts_rotatable_region(
    g: GraspConfiguration,
    tree: KinematicTree,
    obj: ObjectModel,
    contact_eps: float = 8e-3,
    min_fingertips: int = 2,
) -> bool:
    """True when at least ``min_fingertips`` fingertips lie within
    ``contact_eps`` of the object's rotatable region."""
    if obj.rotatable is None or obj.axis is None:
        return False
    if not tree.fingertips:
        return False
    tips_world = g.fingertip_positions(tree)
    tips_obj = g.obj_pose.inverse().apply(tips_world)
    dists = obj.rotatable.distance(tips_obj, obj.axis)
    return int(np.sum(dists <= contact_eps)) >= min_fingertips
