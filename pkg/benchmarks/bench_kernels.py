"""Compare the numba kernels against the pure numpy fallback.

Run:
    python3 benchmarks/bench_kernels.py [--frames 2000] [--repeats 5]

The two backends are required to produce identical bits, so this is a
pure throughput comparison: batched forward kinematics on each builtin
hand, then end-to-end clip synthesis.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hopkit.geom import Pose, quat_identity
from hopkit.grasps import GraspConfiguration, GraspSet
from hopkit.kernels import _numba, _numpy, backend_name
from hopkit.kinematics import forward_kinematics, load_hand_model
from hopkit.scene import ObjectModel
from hopkit.synth import SynthConfig, synth_grasp


def bench_fk(module, tree, frames: int, repeats: int, rng) -> float:
    wp = rng.normal(size=(frames, 3))
    wq = rng.normal(size=(frames, 4))
    wq /= np.linalg.norm(wq, axis=1, keepdims=True)
    theta = rng.uniform(-0.5, 0.5, size=(frames, tree.dof))
    args = (
        tree._parents,
        tree._offsets,
        tree._axes,
        tree._n_axes,
        tree._dof_start,
        wp,
        wq,
        theta,
    )
    module.fk_batch(*args)  # warm-up (numba compiles here)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        module.fk_batch(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def make_demo_scene() -> tuple:
    tree = load_hand_model("mano")
    half = 0.03
    corners = np.array(
        [[sx * half, sy * half, sz * half] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    )
    obj = ObjectModel(id="cube", keypoints=corners, hull_points=corners, com=np.zeros(3))
    obj_pose = Pose(np.array([0.0, 0.0, half]), quat_identity())
    wrist = Pose(np.array([-0.12, 0.0, 0.1]), quat_identity())
    theta = np.full(tree.dof, 0.2)
    joints = forward_kinematics(tree, wrist, theta)
    g = GraspConfiguration(
        hand_model=tree.id,
        object_id=obj.id,
        wrist=wrist,
        theta=theta,
        joints=joints,
        obj_pose=obj_pose,
        obj_keypoints=obj_pose.apply(obj.keypoints),
    )
    return tree, obj, GraspSet(grasps=(g,), hand_model=tree.id, object_id=obj.id)


def bench_synth(tree, obj, grasps, repeats: int) -> float:
    cfg = SynthConfig()
    rng = np.random.default_rng(0)
    synth_grasp(cfg, tree, grasps, obj, rng)  # warm-up
    t0 = time.perf_counter()
    n = 0
    while time.perf_counter() - t0 < repeats * 0.2:
        synth_grasp(cfg, tree, grasps, obj, rng)
        n += 1
    return n / (time.perf_counter() - t0)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--frames", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(7)
    print(f"active backend: {backend_name()}")
    print(f"{'hand':<10} {'frames':>7} {'numpy (ms)':>11} {'numba (ms)':>11} {'speedup':>8}")
    for name in ("mano", "shadow", "allegro"):
        tree = load_hand_model(name)
        t_np = bench_fk(_numpy, tree, args.frames, args.repeats, rng)
        t_nb = bench_fk(_numba, tree, args.frames, args.repeats, rng)
        print(
            f"{name:<10} {args.frames:>7} {t_np * 1e3:>11.3f} {t_nb * 1e3:>11.3f} "
            f"{t_np / t_nb:>7.1f}x"
        )

    tree, obj, grasps = make_demo_scene()
    rate = bench_synth(tree, obj, grasps, args.repeats)
    print(f"\nsynth_grasp ({backend_name()} backend): {rate:.1f} clips/s")


if __name__ == "__main__":
    main()
