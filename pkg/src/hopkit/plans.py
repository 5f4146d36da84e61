"""Sparse manipulation plans and their conversion to demonstrations.

A plan is a JSON document of labeled wrist keypoints (as an upstream
task planner would emit): pick the object up at the keypoint labeled
``grasp``, carry it, let go at ``release``. Densification interpolates
each of the three segments (start -> grasp, grasp -> release,
release -> end) independently, so the grasp and release keypoints are
hit exactly and no smoothing bleeds across them. Fusing a densified
plan with a grasp set yields a full kinematic demonstration whose
object channel rides the wrist between grasp and release.

Parsing is total: any byte input produces either a plan or a
:class:`~hopkit.errors.PlanError` naming the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import PlanError, ValidationError
from .geom import Pose, cubic_bezier, enforce_sign_continuity, geodesic_angle, slerp
from .grasps import GraspSet, retarget_grasp, transform_grasp
from .kinematics import KinematicTree
from .scene import ObjectModel, StablePose, enumerate_stable_poses
from .synth import Frame, Trajectory, _build_frames

ACTIONS = ("start", "approach", "grasp", "transport", "release", "retreat", "end")

# Orientation segments rotating less than this are treated as static.
STATIC_ROTATION = float(np.deg2rad(1.0))


@dataclass(frozen=True)
class PlanKeypoint:
    index: int
    pose: Pose
    action: str


@dataclass(frozen=True)
class ManipulationPlan:
    """Validated sparse plan: ordered keypoints with designated grasp
    and release indices and a reference into a grasp set."""

    object_id: str
    selected_grasp: int
    grasp_index: int
    release_index: int
    keypoints: tuple[PlanKeypoint, ...]

    def keypoint_by_index(self, index: int) -> PlanKeypoint:
        for kp in self.keypoints:
            if kp.index == index:
                return kp
        raise KeyError(index)

    @property
    def grasp_position(self) -> int:
        """Position of the grasp keypoint within the keypoint tuple."""
        return next(i for i, kp in enumerate(self.keypoints) if kp.index == self.grasp_index)

    @property
    def release_position(self) -> int:
        return next(i for i, kp in enumerate(self.keypoints) if kp.index == self.release_index)


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise PlanError(f"missing required field {key!r}", path)
    return doc[key]


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise PlanError(f"expected an integer, got {value!r}", path)
    return value


def _as_float_list(value, n: int, path: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise PlanError(f"expected a list of {n} numbers", path)
    out = []
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise PlanError(f"expected a number, got {v!r}", f"{path}[{i}]")
        out.append(float(v))
    arr = np.asarray(out, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise PlanError("values must be finite", path)
    return arr


def parse_plan(document) -> ManipulationPlan:
    """Parse a plan from bytes, str, or an already-decoded dict.

    Never raises anything but :class:`PlanError` on bad input; the
    error names the offending field. Quaternions within 1e-3 of unit
    norm are normalized; anything further off is rejected.
    """
    doc = document
    if isinstance(doc, (bytes, bytearray)):
        try:
            doc = doc.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise PlanError(f"not valid UTF-8: {exc}") from None
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise PlanError(f"not valid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise PlanError(f"plan must be a JSON object, got {type(doc).__name__}")

    object_id = _require(doc, "object", "object")
    if not isinstance(object_id, str) or not object_id:
        raise PlanError("object must be a non-empty string", "object")
    selected = _as_int(_require(doc, "selected_grasp", "selected_grasp"), "selected_grasp")
    if selected < 0:
        raise PlanError("selected_grasp must be non-negative", "selected_grasp")
    grasp_index = _as_int(_require(doc, "grasp_index", "grasp_index"), "grasp_index")
    release_index = _as_int(_require(doc, "release_index", "release_index"), "release_index")
    raw_kps = _require(doc, "keypoints", "keypoints")
    if not isinstance(raw_kps, list) or len(raw_kps) < 2:
        raise PlanError("keypoints must be a list of at least 2 entries", "keypoints")

    keypoints = []
    for i, kdoc in enumerate(raw_kps):
        path = f"keypoints[{i}]"
        if not isinstance(kdoc, dict):
            raise PlanError("keypoint must be an object", path)
        index = _as_int(_require(kdoc, "index", f"{path}.index"), f"{path}.index")
        p = _as_float_list(_require(kdoc, "p", f"{path}.p"), 3, f"{path}.p")
        q = _as_float_list(_require(kdoc, "q", f"{path}.q"), 4, f"{path}.q")
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > 1e-3:
            raise PlanError(f"quaternion norm {norm:.6g} is too far from 1", f"{path}.q")
        action = _require(kdoc, "action", f"{path}.action")
        if action not in ACTIONS:
            raise PlanError(f"unknown action {action!r}", f"{path}.action")
        keypoints.append(PlanKeypoint(index=index, pose=Pose(p, q / norm), action=str(action)))

    indices = [kp.index for kp in keypoints]
    for i in range(1, len(indices)):
        if indices[i] <= indices[i - 1]:
            raise PlanError(
                f"keypoint indices must be strictly increasing, got {indices[i - 1]} then {indices[i]}",
                f"keypoints[{i}].index",
            )
    if grasp_index not in indices:
        raise PlanError(f"grasp_index {grasp_index} matches no keypoint", "grasp_index")
    if release_index not in indices:
        raise PlanError(f"release_index {release_index} matches no keypoint", "release_index")
    if grasp_index >= release_index:
        raise PlanError(
            f"grasp_index {grasp_index} must precede release_index {release_index}",
            "grasp_index",
        )
    grasp_labels = [kp.index for kp in keypoints if kp.action == "grasp"]
    if grasp_labels != [grasp_index]:
        raise PlanError(
            f"exactly one keypoint must be labeled 'grasp' at index {grasp_index}, got {grasp_labels}",
            "keypoints",
        )
    release_labels = [kp.index for kp in keypoints if kp.action == "release"]
    if release_labels != [release_index]:
        raise PlanError(
            f"exactly one keypoint must be labeled 'release' at index {release_index}, got {release_labels}",
            "keypoints",
        )
    return ManipulationPlan(
        object_id=object_id,
        selected_grasp=selected,
        grasp_index=grasp_index,
        release_index=release_index,
        keypoints=tuple(keypoints),
    )


def load_plan(path: str) -> ManipulationPlan:
    with open(path, "rb") as fh:
        return parse_plan(fh.read())


@dataclass(frozen=True)
class DensePath:
    """Densified wrist path with the sample indices of the grasp and
    release keypoints."""

    poses: tuple[Pose, ...]
    grasp_sample: int
    release_sample: int


def _densify_segment(keypoints: list[PlanKeypoint], samples_per_keypoint: int, tangent_scale: float) -> list[Pose]:
    """Densify one segment; returns samples including both endpoints."""
    if len(keypoints) == 1:
        return [keypoints[0].pose]
    positions = cubic_bezier(
        [kp.pose for kp in keypoints],
        tangent_scale=tangent_scale,
        samples_per_segment=samples_per_keypoint,
    )
    quats = enforce_sign_continuity([kp.pose.orientation for kp in keypoints])
    total_rotation = sum(
        geodesic_angle(quats[i], quats[i + 1]) for i in range(len(quats) - 1)
    )
    poses = []
    n_pieces = len(keypoints) - 1
    for s, pos in enumerate(positions):
        piece, local = divmod(s, samples_per_keypoint)
        if piece >= n_pieces:  # the final sample of the final piece
            piece = n_pieces - 1
            local = samples_per_keypoint
        u = local / samples_per_keypoint
        if total_rotation < STATIC_ROTATION:
            q = quats[0]
        else:
            q = slerp(quats[piece], quats[piece + 1], u)
        poses.append(Pose(pos, q))
    return poses


def densify_plan(
    plan: ManipulationPlan,
    samples_per_keypoint: int = 20,
    tangent_scale: float = 1.0 / 6.0,
) -> DensePath:
    """Interpolate the plan into a dense wrist path.

    The three segments (first keypoint -> grasp, grasp -> release,
    release -> last) are densified independently with a piecewise cubic
    Bezier through the keypoint positions and per-piece slerp for
    orientation (segments rotating less than 1 degree in total keep a
    constant orientation). Segment boundaries are shared samples, so
    the grasp and release keypoints appear exactly once and exactly as
    authored.
    """
    if samples_per_keypoint < 1:
        raise ValidationError("samples_per_keypoint must be >= 1")
    kps = list(plan.keypoints)
    gp = plan.grasp_position
    rp = plan.release_position
    segments = [kps[: gp + 1], kps[gp : rp + 1], kps[rp:]]
    poses: list[Pose] = []
    boundaries = []
    for seg in segments:
        dense = _densify_segment(seg, samples_per_keypoint, tangent_scale)
        if poses:
            dense = dense[1:]  # shared boundary sample
        poses.extend(dense)
        boundaries.append(len(poses) - 1)
    grasp_sample = boundaries[0]
    release_sample = boundaries[1]
    # Endpoints and designated keypoints are exact by construction.
    return DensePath(poses=tuple(poses), grasp_sample=grasp_sample, release_sample=release_sample)


def plan_to_demonstration(
    plan: ManipulationPlan,
    grasps: GraspSet,
    obj: ObjectModel,
    tree: KinematicTree,
    fps: float = 60.0,
    samples_per_keypoint: int = 20,
    tangent_scale: float = 1.0 / 6.0,
    stable_poses: list[StablePose] | None = None,
    pos_tol: float = 0.01,
    ang_tol: float = float(np.deg2rad(10.0)),
) -> Trajectory:
    """Fuse a plan with a grasp set into a full demonstration.

    The selected grasp is retargeted onto the stable resting pose whose
    wrist best matches the plan's grasp keypoint; a mismatch beyond
    ``pos_tol`` / ``ang_tol`` is an error naming both poses. Before the
    grasp sample the fingers stay open and the object rests; from grasp
    to release the object rides the wrist under the grasp's relative
    transform; after release the object stays put and the fingers open
    over the remaining samples.
    """
    if plan.object_id != obj.id:
        raise ValidationError(
            f"plan is for object {plan.object_id!r}, model is {obj.id!r}"
        )
    if not 0 <= plan.selected_grasp < len(grasps):
        raise ValidationError(
            f"plan selects grasp {plan.selected_grasp}, set has {len(grasps)}"
        )
    dense = densify_plan(plan, samples_per_keypoint, tangent_scale)
    plan_wrist = plan.keypoint_by_index(plan.grasp_index).pose

    stable = stable_poses if stable_poses is not None else enumerate_stable_poses(obj)
    if not stable:
        raise ValidationError(f"object {obj.id!r} has no stable resting pose")
    g = grasps[plan.selected_grasp]
    best = None
    for h in stable:
        cand = retarget_grasp(g, h.pose)
        dp = float(np.linalg.norm(cand.wrist.position - plan_wrist.position))
        da = geodesic_angle(cand.wrist.orientation, plan_wrist.orientation)
        if best is None or (dp + da) < (best[1] + best[2]):
            best = (cand, dp, da, h)
    cand, dp, da, h = best
    if dp > pos_tol or da > ang_tol:
        raise ValidationError(
            "selected grasp is incompatible with the plan's grasp keypoint: "
            f"grasp wrist p={cand.wrist.position.tolist()} q={cand.wrist.orientation.tolist()} vs "
            f"plan p={plan_wrist.position.tolist()} q={plan_wrist.orientation.tolist()} "
            f"(position off by {dp * 100:.2f} cm, orientation by {np.rad2deg(da):.2f} deg)"
        )
    # Align the grasp's wrist exactly onto the plan keypoint.
    g_at_plan = transform_grasp(cand, plan_wrist.compose(cand.wrist.inverse()))
    rel_obj = plan_wrist.inverse().compose(g_at_plan.obj_pose)

    n = len(dense.poses)
    gi, ri = dense.grasp_sample, dense.release_sample
    wrists = list(dense.poses)
    dof = tree.dof
    thetas = np.zeros((n, dof))
    obj_poses: list[Pose] = []
    obj_kps: list[np.ndarray] = []
    contact = np.zeros((n, len(tree.fingertips)), dtype=bool)
    phases = []
    release_pose = None
    tail = max(1, n - 1 - ri)
    for t in range(n):
        if t < gi:
            # Static rest at the grasp-moment pose: aligning the grasp
            # wrist onto the plan keypoint nudges the object by at most
            # the match tolerance, and the approach must not move it.
            obj_poses.append(g_at_plan.obj_pose)
            phases.append("grasp")
        elif t <= ri:
            thetas[t] = g.theta
            pose_t = wrists[t].compose(rel_obj) if t > gi else g_at_plan.obj_pose
            obj_poses.append(pose_t)
            contact[t] = t < ri
            phases.append("grasp" if t == gi else "move")
            if t == ri:
                release_pose = pose_t
        else:
            ramp = 1.0 - (t - ri) / tail
            thetas[t] = g.theta * ramp
            obj_poses.append(release_pose)
            phases.append("place")
    for pose_t in obj_poses:
        obj_kps.append(pose_t.apply(obj.keypoints))

    # Build per-phase so frames keep their segment labels.
    frames: list[Frame] = []
    for phase in ("grasp", "move", "place"):
        sel = [t for t in range(n) if phases[t] == phase]
        if not sel:
            continue
        built = _build_frames(
            tree,
            [wrists[t] for t in sel],
            thetas[sel],
            contact[sel],
            phase,
            [obj_poses[t] for t in sel],
            [obj_kps[t] for t in sel],
        )
        frames.extend(built)
    return Trajectory(
        frames=tuple(frames),
        fps=fps,
        provenance={
            "skills": ["grasp", "move", "place"],
            "hand_model": tree.id,
            "object": obj.id,
            "scale": obj.scale,
            "plan": {
                "selected_grasp": plan.selected_grasp,
                "grasp_index": plan.grasp_index,
                "release_index": plan.release_index,
                "grasp_sample": gi,
                "release_sample": ri,
                "stable_face": h.face_index,
            },
        },
    )
