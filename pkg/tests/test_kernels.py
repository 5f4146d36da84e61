"""Both kernel backends must agree bit for bit, and the environment flag
must select the numpy path."""

import os
import subprocess
import sys

import numpy as np

from hopkit import kernels
from hopkit.geom import random_quat
from hopkit.kernels import _numpy


def random_batch(tree, rng, n=32):
    wrist_p = rng.normal(size=(n, 3))
    wrist_q = np.stack([random_quat(rng) for _ in range(n)])
    theta = rng.uniform(-0.8, 2.0, size=(n, tree.dof))
    return wrist_p, wrist_q, theta


def test_backends_bit_identical_fk(claw, mano):
    rng = np.random.default_rng(99)
    for tree in (claw, mano):
        wrist_p, wrist_q, theta = random_batch(tree, rng)
        args = (tree._parents, tree._offsets, tree._axes, tree._n_axes, tree._dof_start)
        active = kernels.fk_batch(*args, wrist_p, wrist_q, theta)
        fallback = _numpy.fk_batch(*args, wrist_p, wrist_q, theta)
        assert np.array_equal(active, fallback)


def test_backends_bit_identical_quat_ops():
    rng = np.random.default_rng(100)
    a = np.stack([random_quat(rng) for _ in range(64)])
    b = np.stack([random_quat(rng) for _ in range(64)])
    v = rng.normal(size=(64, 3))
    assert np.array_equal(kernels.quat_mul_batch(a, b), _numpy.quat_mul_batch(a, b))
    assert np.array_equal(kernels.quat_rotate_batch(a, v), _numpy.quat_rotate_batch(a, v))


def test_env_flag_forces_numpy_backend():
    code = "from hopkit import kernels; print(kernels.backend_name())"
    env = {**os.environ, "HOPKIT_PURE_NUMPY": "1"}
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "numpy"


def test_env_flag_zero_means_default():
    code = "from hopkit import kernels; print(kernels.backend_name())"
    env = {**os.environ, "HOPKIT_PURE_NUMPY": "0"}
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() in ("numba", "numpy")


def test_synthesis_identical_across_backends(tmp_path):
    """A full clip synthesized under each backend byte-matches."""
    script = tmp_path / "emit.py"
    script.write_text(
        "import sys, numpy as np\n"
        "sys.path.insert(0, sys.argv[1])\n"
        "from conftest import make_claw, make_cube, make_claw_grasp_set\n"
        "from hopkit.synth import SynthConfig, synth_grasp\n"
        "from hopkit.io import trajectory_to_json_bytes\n"
        "tree, cube = make_claw(), make_cube()\n"
        "gs = make_claw_grasp_set(tree, cube)\n"
        "t = synth_grasp(SynthConfig(), tree, gs, cube, np.random.default_rng(7))\n"
        "sys.stdout.buffer.write(trajectory_to_json_bytes(t))\n"
    )
    tests_dir = os.path.dirname(os.path.abspath(__file__))
    outputs = {}
    for flag in ("0", "1"):
        env = {**os.environ, "HOPKIT_PURE_NUMPY": flag}
        res = subprocess.run(
            [sys.executable, str(script), tests_dir],
            env=env, capture_output=True, check=True,
        )
        outputs[flag] = res.stdout
    assert outputs["0"] == outputs["1"]
    assert outputs["0"]


def test_fk_batch_handles_empty_frames(claw):
    args = (claw._parents, claw._offsets, claw._axes, claw._n_axes, claw._dof_start)
    out = kernels.fk_batch(
        *args, np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, claw.dof))
    )
    assert out.shape == (0, claw.n_joints, 3)
