"""Kinematic trees for articulated hands and batched forward kinematics.

A hand is a tree of revolute joints hanging off a free-floating wrist.
Each joint contributes a fixed translation in its parent's frame
followed by up to three sequential single-axis rotations; the number of
axes across all joints is the hand's finger DoF count. Hand models ship
as JSON files (see ``data/hands/``): a 45-DoF five-finger model
("mano", 15 joints x 3 axes), a 20-DoF five-finger model ("shadow"),
and a 16-DoF four-finger model ("allegro"). Link lengths are
approximate; the toolkit needs topology and plausible scale, not
millimeter fidelity to any physical device.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import kernels
from .errors import ValidationError
from .geom import Pose

BUILTIN_HANDS = ("mano", "shadow", "allegro")


@dataclass(frozen=True)
class Joint:
    """One revolute joint: fixed offset then 0..3 sequential axis rotations."""

    name: str
    parent: int
    offset: np.ndarray
    axes: np.ndarray
    limits: np.ndarray

    def __post_init__(self):
        offset = np.asarray(self.offset, dtype=np.float64).reshape(3)
        axes = np.asarray(self.axes, dtype=np.float64).reshape(-1, 3)
        limits = np.asarray(self.limits, dtype=np.float64).reshape(-1, 2)
        if axes.shape[0] > 3:
            raise ValidationError(f"joint {self.name}: at most 3 axes allowed")
        if limits.shape[0] != axes.shape[0]:
            raise ValidationError(f"joint {self.name}: one limit pair per axis required")
        for a in axes:
            if abs(np.linalg.norm(a) - 1.0) > 1e-9:
                raise ValidationError(f"joint {self.name}: axes must be unit vectors")
        if np.any(limits[:, 0] > limits[:, 1]):
            raise ValidationError(f"joint {self.name}: lower limit exceeds upper limit")
        for arr in (offset, axes, limits):
            arr.setflags(write=False)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "limits", limits)

    @property
    def dof(self) -> int:
        return self.axes.shape[0]


@dataclass(frozen=True)
class KinematicTree:
    """Joint tree rooted at the wrist.

    Invariants: every joint's parent index is smaller than its own
    index (-1 denotes the wrist), fingertip indices are valid joints,
    and named keypoints resolve to valid joints.
    """

    id: str
    joints: tuple[Joint, ...]
    fingertips: tuple[int, ...]
    keypoints: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for i, j in enumerate(self.joints):
            if not -1 <= j.parent < i:
                raise ValidationError(
                    f"joint {i} ({j.name}): parent index {j.parent} must be in [-1, {i})"
                )
        names = [j.name for j in self.joints]
        if len(set(names)) != len(names):
            raise ValidationError("joint names must be unique")
        for t in self.fingertips:
            if not 0 <= t < len(self.joints):
                raise ValidationError(f"fingertip index {t} out of range")
        for key, idx in self.keypoints.items():
            if not 0 <= idx < len(self.joints):
                raise ValidationError(f"keypoint {key!r} maps to invalid joint {idx}")
        # Packed arrays consumed by the fk kernels.
        n = len(self.joints)
        parents = np.array([j.parent for j in self.joints], dtype=np.int32)
        offsets = np.array([j.offset for j in self.joints], dtype=np.float64)
        axes = np.zeros((n, 3, 3), dtype=np.float64)
        n_axes = np.zeros(n, dtype=np.int32)
        dof_start = np.zeros(n, dtype=np.int32)
        cursor = 0
        for i, j in enumerate(self.joints):
            n_axes[i] = j.dof
            dof_start[i] = cursor
            axes[i, : j.dof] = j.axes
            cursor += j.dof
        lower = np.concatenate([j.limits[:, 0] for j in self.joints if j.dof]) if cursor else np.zeros(0)
        upper = np.concatenate([j.limits[:, 1] for j in self.joints if j.dof]) if cursor else np.zeros(0)
        for arr in (parents, offsets, axes, n_axes, dof_start, lower, upper):
            arr.setflags(write=False)
        object.__setattr__(self, "_parents", parents)
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_axes", axes)
        object.__setattr__(self, "_n_axes", n_axes)
        object.__setattr__(self, "_dof_start", dof_start)
        object.__setattr__(self, "_dof", cursor)
        object.__setattr__(self, "_lower", lower)
        object.__setattr__(self, "_upper", upper)

    @property
    def dof(self) -> int:
        """Total finger DoF (flat angle vector length)."""
        return self._dof

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def lower_limits(self) -> np.ndarray:
        return self._lower

    @property
    def upper_limits(self) -> np.ndarray:
        return self._upper

    def joint_index(self, name: str) -> int:
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise KeyError(f"no joint named {name!r} in hand {self.id!r}")

    def keypoint_index(self, key: str) -> int:
        if key not in self.keypoints:
            raise KeyError(f"hand {self.id!r} defines no keypoint {key!r}")
        return self.keypoints[key]

    def clamp(self, theta: np.ndarray) -> np.ndarray:
        """Clip a flat angle vector into the joint limits."""
        return np.clip(np.asarray(theta, dtype=np.float64), self._lower, self._upper)

    def check_limits(self, theta: np.ndarray, tol: float = 1e-9) -> bool:
        theta = np.asarray(theta, dtype=np.float64)
        return bool(
            theta.shape == (self._dof,)
            and np.all(theta >= self._lower - tol)
            and np.all(theta <= self._upper + tol)
        )


def forward_kinematics(tree: KinematicTree, wrist: Pose, theta) -> np.ndarray:
    """World positions (J, 3) of every joint for one frame."""
    theta = np.ascontiguousarray(theta, dtype=np.float64).reshape(1, -1)
    if theta.shape[1] != tree.dof:
        raise ValidationError(f"expected {tree.dof} angles, got {theta.shape[1]}")
    out = kernels.fk_batch(
        tree._parents,
        tree._offsets,
        tree._axes,
        tree._n_axes,
        tree._dof_start,
        np.ascontiguousarray(wrist.position).reshape(1, 3),
        np.ascontiguousarray(wrist.orientation).reshape(1, 4),
        theta,
    )
    return out[0]


def forward_kinematics_batch(
    tree: KinematicTree, wrist_p: np.ndarray, wrist_q: np.ndarray, theta: np.ndarray
) -> np.ndarray:
    """World joint positions (F, J, 3) for a batch of F frames."""
    wrist_p = np.ascontiguousarray(wrist_p, dtype=np.float64)
    wrist_q = np.ascontiguousarray(wrist_q, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    if theta.ndim != 2 or theta.shape[1] != tree.dof:
        raise ValidationError(f"expected (F, {tree.dof}) angles, got {theta.shape}")
    return kernels.fk_batch(
        tree._parents, tree._offsets, tree._axes, tree._n_axes, tree._dof_start,
        wrist_p, wrist_q, theta,
    )


def tree_from_dict(doc: dict) -> KinematicTree:
    try:
        joints = tuple(
            Joint(
                name=str(j["name"]),
                parent=int(j["parent"]),
                offset=j["offset"],
                axes=j.get("axes", []),
                limits=j.get("limits", []),
            )
            for j in doc["joints"]
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed hand model: {exc}") from exc
    names = {j.name: i for i, j in enumerate(joints)}

    def resolve(ref) -> int:
        if isinstance(ref, str):
            if ref not in names:
                raise ValidationError(f"hand model references unknown joint {ref!r}")
            return names[ref]
        return int(ref)

    fingertips = tuple(resolve(t) for t in doc.get("fingertips", []))
    keypoints = {str(k): resolve(v) for k, v in doc.get("keypoints", {}).items()}
    return KinematicTree(
        id=str(doc.get("id", "hand")),
        joints=joints,
        fingertips=fingertips,
        keypoints=keypoints,
    )


def load_hand_model(name_or_path: str) -> KinematicTree:
    """Load a hand model by builtin id ('mano', 'shadow', 'allegro') or path."""
    if name_or_path in BUILTIN_HANDS:
        text = (
            resources.files("hopkit").joinpath(f"data/hands/{name_or_path}.json").read_text()
        )
    else:
        with open(name_or_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    return tree_from_dict(json.loads(text))
