"""Pure-numpy reference implementations of the hot kernels.

These are the fallback path used when numba is unavailable or when
``HOPKIT_PURE_NUMPY=1`` is set. The accelerated twins in ``_numba.py``
use the same arithmetic expressions in the same order so both backends
produce identical results.

Quaternions are ``[w, x, y, z]`` and assumed unit-norm.
"""

from __future__ import annotations

import numpy as np


def quat_mul_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product of two quaternion arrays of shape (..., 4)."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    out = np.empty(np.broadcast(a, b).shape, dtype=np.float64)
    out[..., 0] = aw * bw - ax * bx - ay * by - az * bz
    out[..., 1] = aw * bx + ax * bw + ay * bz - az * by
    out[..., 2] = aw * by - ax * bz + ay * bw + az * bx
    out[..., 3] = aw * bz + ax * by - ay * bx + az * bw
    return out


def quat_rotate_batch(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v (..., 3) by unit quaternions q (..., 4)."""
    w = q[..., 0]
    qx, qy, qz = q[..., 1], q[..., 2], q[..., 3]
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    # t = 2 * cross(q_vec, v)
    tx = 2.0 * (qy * vz - qz * vy)
    ty = 2.0 * (qz * vx - qx * vz)
    tz = 2.0 * (qx * vy - qy * vx)
    # v' = v + w * t + cross(q_vec, t)
    out = np.empty(np.broadcast(q[..., :3], v).shape, dtype=np.float64)
    out[..., 0] = vx + w * tx + (qy * tz - qz * ty)
    out[..., 1] = vy + w * ty + (qz * tx - qx * tz)
    out[..., 2] = vz + w * tz + (qx * ty - qy * tx)
    return out


def fk_batch(
    parents: np.ndarray,
    offsets: np.ndarray,
    axes: np.ndarray,
    n_axes: np.ndarray,
    dof_start: np.ndarray,
    wrist_p: np.ndarray,
    wrist_q: np.ndarray,
    theta: np.ndarray,
) -> np.ndarray:
    """Forward kinematics over a batch of frames.

    Args:
        parents: (J,) int32, parent joint index, -1 means the wrist root.
        offsets: (J, 3) fixed translation from the parent frame.
        axes: (J, 3, 3) per-joint rotation axes (unit vectors, row a is
            axis a); rows past ``n_axes[j]`` are ignored.
        n_axes: (J,) number of rotation axes per joint (0..3).
        dof_start: (J,) index of the joint's first angle in the flat
            angle vector.
        wrist_p: (F, 3) wrist positions.
        wrist_q: (F, 4) wrist orientations, unit quaternions.
        theta: (F, D) flat joint angles.

    Returns:
        (F, J, 3) world positions of every joint for every frame.
    """
    n_frames = wrist_p.shape[0]
    n_joints = parents.shape[0]
    pos = np.empty((n_frames, n_joints, 3), dtype=np.float64)
    quat = np.empty((n_frames, n_joints, 4), dtype=np.float64)
    for j in range(n_joints):
        parent = parents[j]
        if parent < 0:
            p_par = wrist_p
            q_par = wrist_q
        else:
            p_par = pos[:, parent, :]
            q_par = quat[:, parent, :]
        pos[:, j, :] = p_par + quat_rotate_batch(q_par, offsets[j])
        q = q_par
        for a in range(n_axes[j]):
            half = 0.5 * theta[:, dof_start[j] + a]
            s = np.sin(half)
            aq = np.empty((n_frames, 4), dtype=np.float64)
            aq[:, 0] = np.cos(half)
            aq[:, 1] = axes[j, a, 0] * s
            aq[:, 2] = axes[j, a, 1] * s
            aq[:, 3] = axes[j, a, 2] * s
            q = quat_mul_batch(q, aq)
        quat[:, j, :] = q
    return pos
