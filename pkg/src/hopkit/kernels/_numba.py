"""Numba-compiled implementations of the hot kernels.

Mirrors ``_numpy.py`` expression for expression (no fastmath, so no
reassociation): both backends return bit-identical arrays.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _quat_mul(aw, ax, ay, az, bw, bx, by, bz):
    w = aw * bw - ax * bx - ay * by - az * bz
    x = aw * bx + ax * bw + ay * bz - az * by
    y = aw * by - ax * bz + ay * bw + az * bx
    z = aw * bz + ax * by - ay * bx + az * bw
    return w, x, y, z


@njit(cache=True)
def _quat_rotate(w, qx, qy, qz, vx, vy, vz):
    tx = 2.0 * (qy * vz - qz * vy)
    ty = 2.0 * (qz * vx - qx * vz)
    tz = 2.0 * (qx * vy - qy * vx)
    ox = vx + w * tx + (qy * tz - qz * ty)
    oy = vy + w * ty + (qz * tx - qx * tz)
    oz = vz + w * tz + (qx * ty - qy * tx)
    return ox, oy, oz


@njit(cache=True)
def quat_mul_batch(a, b):
    out = np.empty((a.shape[0], 4), dtype=np.float64)
    for i in range(a.shape[0]):
        w, x, y, z = _quat_mul(
            a[i, 0], a[i, 1], a[i, 2], a[i, 3],
            b[i, 0], b[i, 1], b[i, 2], b[i, 3],
        )
        out[i, 0] = w
        out[i, 1] = x
        out[i, 2] = y
        out[i, 3] = z
    return out


@njit(cache=True)
def quat_rotate_batch(q, v):
    out = np.empty((q.shape[0], 3), dtype=np.float64)
    for i in range(q.shape[0]):
        x, y, z = _quat_rotate(
            q[i, 0], q[i, 1], q[i, 2], q[i, 3],
            v[i, 0], v[i, 1], v[i, 2],
        )
        out[i, 0] = x
        out[i, 1] = y
        out[i, 2] = z
    return out


@njit(cache=True)
def fk_batch(parents, offsets, axes, n_axes, dof_start, wrist_p, wrist_q, theta):
    n_frames = wrist_p.shape[0]
    n_joints = parents.shape[0]
    pos = np.empty((n_frames, n_joints, 3), dtype=np.float64)
    quat = np.empty((n_frames, n_joints, 4), dtype=np.float64)
    for f in range(n_frames):
        for j in range(n_joints):
            parent = parents[j]
            if parent < 0:
                ppx, ppy, ppz = wrist_p[f, 0], wrist_p[f, 1], wrist_p[f, 2]
                qw, qx, qy, qz = wrist_q[f, 0], wrist_q[f, 1], wrist_q[f, 2], wrist_q[f, 3]
            else:
                ppx, ppy, ppz = pos[f, parent, 0], pos[f, parent, 1], pos[f, parent, 2]
                qw, qx, qy, qz = (
                    quat[f, parent, 0],
                    quat[f, parent, 1],
                    quat[f, parent, 2],
                    quat[f, parent, 3],
                )
            ox, oy, oz = _quat_rotate(
                qw, qx, qy, qz, offsets[j, 0], offsets[j, 1], offsets[j, 2]
            )
            pos[f, j, 0] = ppx + ox
            pos[f, j, 1] = ppy + oy
            pos[f, j, 2] = ppz + oz
            for a in range(n_axes[j]):
                half = 0.5 * theta[f, dof_start[j] + a]
                s = np.sin(half)
                aw = np.cos(half)
                ax = axes[j, a, 0] * s
                ay = axes[j, a, 1] * s
                az = axes[j, a, 2] * s
                qw, qx, qy, qz = _quat_mul(qw, qx, qy, qz, aw, ax, ay, az)
            quat[f, j, 0] = qw
            quat[f, j, 1] = qx
            quat[f, j, 2] = qy
            quat[f, j, 3] = qz
    return pos
