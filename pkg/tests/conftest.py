"""Shared fixtures: a cheap two-finger test hand, simple objects, and
grasp sets built by forward kinematics so they are valid by
construction."""

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hopkit.geom import Pose, quat_from_axis_angle, quat_identity
from hopkit.grasps import GraspConfiguration, GraspSet, grasp_set_to_dict
from hopkit.kinematics import Joint, KinematicTree, forward_kinematics, load_hand_model
from hopkit.scene import ObjectModel, RotatableRegion
from hopkit.synth import SynthConfig

# Property tests share one profile: no wall-clock deadline (the first
# call into a numba kernel JIT-compiles) and a modest example budget so
# the whole suite stays fast.
settings.register_profile(
    "hopkit",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("hopkit")

CUBE_HALF = 0.03


def make_claw() -> KinematicTree:
    """Two fingers, two flexion joints each: the smallest hand that
    exercises every code path (multiple fingers, chained joints)."""
    joints = (
        Joint(name="f1_base", parent=-1, offset=[0.05, 0.02, 0.0], axes=[[0.0, 1.0, 0.0]], limits=[[-0.8, 2.0]]),
        Joint(name="f1_tip", parent=0, offset=[0.04, 0.0, 0.0], axes=[[0.0, 1.0, 0.0]], limits=[[-0.8, 2.0]]),
        Joint(name="f2_base", parent=-1, offset=[0.05, -0.02, 0.0], axes=[[0.0, 1.0, 0.0]], limits=[[-0.8, 2.0]]),
        Joint(name="f2_tip", parent=2, offset=[0.04, 0.0, 0.0], axes=[[0.0, 1.0, 0.0]], limits=[[-0.8, 2.0]]),
    )
    return KinematicTree(
        id="claw",
        joints=joints,
        fingertips=(1, 3),
        keypoints={"index_base": 0, "palm": 2},
    )


def claw_model_doc() -> dict:
    """The claw of make_claw as an on-disk hand model document."""
    return {
        "id": "claw",
        "joints": [
            {"name": "f1_base", "parent": -1, "offset": [0.05, 0.02, 0.0], "axes": [[0.0, 1.0, 0.0]], "limits": [[-0.8, 2.0]]},
            {"name": "f1_tip", "parent": 0, "offset": [0.04, 0.0, 0.0], "axes": [[0.0, 1.0, 0.0]], "limits": [[-0.8, 2.0]]},
            {"name": "f2_base", "parent": -1, "offset": [0.05, -0.02, 0.0], "axes": [[0.0, 1.0, 0.0]], "limits": [[-0.8, 2.0]]},
            {"name": "f2_tip", "parent": 2, "offset": [0.04, 0.0, 0.0], "axes": [[0.0, 1.0, 0.0]], "limits": [[-0.8, 2.0]]},
        ],
        "fingertips": ["f1_tip", "f2_tip"],
        "keypoints": {"index_base": "f1_base", "palm": "f2_base"},
    }


def cube_corners(half: float = CUBE_HALF) -> np.ndarray:
    return np.array(
        [[sx * half, sy * half, sz * half] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    )


def make_cube(com=None, with_region: bool = True) -> ObjectModel:
    corners = cube_corners()
    region = (
        RotatableRegion(axis_point=np.zeros(3), radius=0.08, axial_range=(-0.04, 0.04))
        if with_region
        else None
    )
    return ObjectModel(
        id="cube",
        keypoints=corners,
        hull_points=corners,
        com=np.zeros(3) if com is None else np.asarray(com, dtype=np.float64),
        axis=np.array([0.0, 0.0, 1.0]) if with_region else None,
        rotatable=region,
    )


def make_tetra(scale: float = 0.04) -> ObjectModel:
    verts = (
        np.array(
            [
                [1.0, 1.0, 1.0],
                [1.0, -1.0, -1.0],
                [-1.0, 1.0, -1.0],
                [-1.0, -1.0, 1.0],
            ]
        )
        * scale
    )
    return ObjectModel(id="tetra", keypoints=verts, hull_points=verts, com=verts.mean(axis=0))


def make_claw_grasp(tree: KinematicTree, obj: ObjectModel, k: int = 0) -> GraspConfiguration:
    """A family of FK-consistent grasps around a cube resting at the
    origin stable pose, indexed by ``k`` for variety."""
    obj_pose = Pose(np.array([0.0, 0.0, CUBE_HALF]), quat_identity())
    yaw = quat_from_axis_angle([0.0, 0.0, 1.0], 0.15 * (k - 3.5))
    wrist = Pose(np.array([-0.10, 0.004 * (k - 3.5), 0.05 + 0.003 * k]), yaw)
    theta = np.array([0.4 + 0.05 * k, 0.3, 0.45 + 0.04 * k, 0.35])
    joints = forward_kinematics(tree, wrist, theta)
    return GraspConfiguration(
        wrist=wrist,
        theta=theta,
        joints=joints,
        obj_pose=obj_pose,
        obj_keypoints=obj_pose.apply(obj.keypoints),
        hand_model=tree.id,
        object_id=obj.id,
    )


def make_claw_grasp_set(tree: KinematicTree, obj: ObjectModel, n: int = 8) -> GraspSet:
    return GraspSet(
        grasps=tuple(make_claw_grasp(tree, obj, k) for k in range(n)),
        hand_model=tree.id,
        object_id=obj.id,
    )


@pytest.fixture(scope="session")
def claw() -> KinematicTree:
    return make_claw()


@pytest.fixture(scope="session")
def cube() -> ObjectModel:
    return make_cube()


@pytest.fixture(scope="session")
def tetra() -> ObjectModel:
    return make_tetra()


@pytest.fixture(scope="session")
def mano() -> KinematicTree:
    return load_hand_model("mano")


@pytest.fixture(scope="session")
def claw_grasps(claw, cube) -> GraspSet:
    return make_claw_grasp_set(claw, cube)


@pytest.fixture
def synth_cfg() -> SynthConfig:
    return SynthConfig()


@pytest.fixture(scope="session")
def grasps_file(tmp_path_factory, claw, cube) -> str:
    """A 20-grasp JSON grasp set on disk."""
    gs = make_claw_grasp_set(claw, cube, n=20)
    path = tmp_path_factory.mktemp("grasps") / "claw_cube_grasps.json"
    path.write_text(json.dumps(grasp_set_to_dict(gs)))
    return str(path)


@pytest.fixture(scope="session")
def object_file(tmp_path_factory, cube) -> str:
    path = tmp_path_factory.mktemp("objects") / "cube.json"
    path.write_text(json.dumps(cube.to_dict()))
    return str(path)


@pytest.fixture(scope="session")
def hand_file(tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("hands") / "claw.json"
    path.write_text(json.dumps(claw_model_doc()))
    return str(path)


# Acceptance tests each cover one release gate; echo a one-line verdict
# per gate after the normal summary so the run log shows them at a glance.
_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _ACCEPTANCE_RESULTS[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in sorted(_ACCEPTANCE_RESULTS.items()):
        name = nodeid.split("::")[-1]
        flag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{flag}  {name}")
