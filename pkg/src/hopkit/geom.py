"""Rotation, pose, interpolation, and sampling primitives.

Conventions used throughout the toolkit:

* Quaternions are numpy float64 arrays ``[w, x, y, z]``, kept unit-norm
  (within 1e-9) by every constructor and operation. ``q`` and ``-q``
  encode the same rotation; use :func:`same_rotation` to compare.
* Angles are radians everywhere inside the library. Degrees appear only
  at reporting boundaries (see ``rewards.tracking_metrics``).
* Positions are meters. Gravity acts along -z; the ground is z = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

EPS = 1e-12
# Above this quaternion dot product slerp degrades to nlerp to avoid
# dividing by a vanishing sin().
SLERP_LERP_DOT = 1.0 - 1e-10


def _as_vec(x, n: int, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite, got {v}")
    return v


def quat_identity() -> np.ndarray:
    """Identity rotation [1, 0, 0, 0]."""
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    """Return q scaled to unit norm. Raises on (near-)zero input.

    Idempotent at the bit level: inputs already unit within 1e-12 pass
    through untouched, so repeated normalization never drifts.
    """
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-9):
        raise ValueError("cannot normalize a near-zero quaternion")
    n = np.where(np.abs(n - 1.0) <= EPS, 1.0, n)
    return q / n


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    """Unit quaternion rotating by ``angle`` radians about ``axis``."""
    axis = _as_vec(axis, 3, "axis")
    n = np.linalg.norm(axis)
    if n < 1e-12:
        raise ValueError("rotation axis must be nonzero")
    axis = axis / n
    half = 0.5 * float(angle)
    s = np.sin(half)
    return np.array([np.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product a * b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return kernels._numpy.quat_mul_batch(a, b) if a.ndim > 1 or b.ndim > 1 else np.array(
        [
            a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector(s) v by quaternion q. v may be (3,) or (..., 3)."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return kernels._numpy.quat_rotate_batch(q, v)


def quat_to_matrix(q) -> np.ndarray:
    """3x3 rotation matrix of unit quaternion q."""
    w, x, y, z = np.asarray(q, dtype=np.float64)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_angle(q) -> float:
    """Rotation angle of q in [0, pi]."""
    q = np.asarray(q, dtype=np.float64)
    return 2.0 * np.arctan2(np.linalg.norm(q[1:]), abs(q[0]))


def geodesic_angle(a, b) -> float:
    """Angle in radians between two rotations, in [0, pi].

    Sign-invariant: geodesic_angle(a, b) == geodesic_angle(a, -b).
    Bit-equal inputs (up to sign) score exactly 0; the quaternion
    product would leave an O(eps) residue on generic components.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.array_equal(a, b) or np.array_equal(a, -b):
        return 0.0
    rel = quat_mul(quat_conjugate(a), b)
    return quat_angle(rel)


def same_rotation(a, b, tol: float = 1e-9) -> bool:
    """True if a and b encode the same rotation within tol radians."""
    return geodesic_angle(a, b) <= tol


def random_quat(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation (normalized 4d Gaussian)."""
    q = rng.standard_normal(4)
    while np.linalg.norm(q) < 1e-6:
        q = rng.standard_normal(4)
    return quat_normalize(q)


def slerp(q0, q1, u: float) -> np.ndarray:
    """Spherical linear interpolation along the shortest arc.

    The sign of q1 is flipped when dot(q0, q1) < 0 so the path covers
    the smaller of the two candidate arcs; with that flip applied,
    antipodal inputs (same rotation) collapse to a constant path and the
    result is deterministic. Near-parallel quaternions fall back to
    normalized lerp. Endpoints are returned exactly: u=0 gives q0 and
    u=1 gives (sign-corrected) q1.
    """
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if u == 0.0:
        return q0.copy()
    if u == 1.0:
        return q1.copy()
    if dot >= SLERP_LERP_DOT:
        return quat_normalize(q0 + u * (q1 - q0))
    theta = np.arccos(min(dot, 1.0))
    s = np.sin(theta)
    w0 = np.sin((1.0 - u) * theta) / s
    w1 = np.sin(u * theta) / s
    return quat_normalize(w0 * q0 + w1 * q1)


def enforce_sign_continuity(quats) -> np.ndarray:
    """Flip quaternion signs so consecutive entries have dot >= 0.

    Returns a new (N, 4) array; the first entry keeps its sign.
    """
    qs = np.array(quats, dtype=np.float64)
    if qs.ndim != 2 or qs.shape[1] != 4:
        raise ValueError(f"expected (N, 4) quaternion array, got {qs.shape}")
    for i in range(1, len(qs)):
        if np.dot(qs[i - 1], qs[i]) < 0.0:
            qs[i] = -qs[i]
    return qs


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation (unit quaternion) then translation.

    Both arrays are copied, validated, and frozen read-only, so a Pose
    can be shared safely.
    """

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        p = _as_vec(self.position, 3, "position")
        q = _as_vec(self.orientation, 4, "orientation")
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"orientation must be unit norm, |q| = {n:.6g}")
        if abs(n - 1.0) > 1e-12:
            # Renormalize only when it buys accuracy. A quaternion that
            # is already unit to float precision keeps its exact bits,
            # so rebuilding a Pose from stored floats round-trips.
            q = q / n
        p = p.copy()
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), quat_identity())

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other's frame: world = self * other."""
        return Pose(
            self.position + quat_rotate(self.orientation, other.position),
            quat_mul(self.orientation, other.orientation),
        )

    def inverse(self) -> "Pose":
        qi = quat_conjugate(self.orientation)
        return Pose(-quat_rotate(qi, self.position), qi)

    def apply(self, points) -> np.ndarray:
        """Transform point(s) (3,) or (N, 3) into this pose's frame."""
        points = np.asarray(points, dtype=np.float64)
        return quat_rotate(self.orientation, points) + self.position

    def almost_equal(self, other: "Pose", pos_tol: float = 1e-9, ang_tol: float = 1e-9) -> bool:
        return (
            float(np.linalg.norm(self.position - other.position)) <= pos_tol
            and geodesic_angle(self.orientation, other.orientation) <= ang_tol
        )


def lerp_pose(p0: Pose, p1: Pose, u: float) -> Pose:
    """Linear position + slerp orientation interpolation.

    Exact at the endpoints: u=0 returns p0's fields, u=1 returns p1's.
    """
    if u == 0.0:
        return Pose(p0.position, p0.orientation)
    if u == 1.0:
        return Pose(p1.position, slerp(p0.orientation, p1.orientation, 1.0))
    pos = (1.0 - u) * p0.position + u * p1.position
    return Pose(pos, slerp(p0.orientation, p1.orientation, u))


def _anchor_positions(anchors) -> np.ndarray:
    pts = []
    for a in anchors:
        pts.append(a.position if isinstance(a, Pose) else np.asarray(a, dtype=np.float64))
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
        raise ValueError(f"need at least 2 three-dimensional anchors, got shape {pts.shape}")
    return pts


def bezier_control_points(anchors, tangent_scale: float = 1.0 / 6.0) -> np.ndarray:
    """Cubic Bezier control points for a piecewise curve through anchors.

    Tangent at interior anchor i is the difference of its neighbors,
    ``anchors[i+1] - anchors[i-1]``; at the two ends it is the one-sided
    difference. Segment i gets control points::

        anchors[i], anchors[i] + s * t_i, anchors[i+1] - s * t_{i+1}, anchors[i+1]

    with s = tangent_scale. s = 1/6 reproduces a Catmull-Rom-like curve.

    Returns:
        (n_segments, 4, 3) control-point array.
    """
    pts = _anchor_positions(anchors)
    n = len(pts)
    tangents = np.empty_like(pts)
    tangents[0] = pts[1] - pts[0]
    tangents[-1] = pts[-1] - pts[-2]
    if n > 2:
        tangents[1:-1] = pts[2:] - pts[:-2]
    ctrl = np.empty((n - 1, 4, 3))
    for i in range(n - 1):
        ctrl[i, 0] = pts[i]
        ctrl[i, 1] = pts[i] + tangent_scale * tangents[i]
        ctrl[i, 2] = pts[i + 1] - tangent_scale * tangents[i + 1]
        ctrl[i, 3] = pts[i + 1]
    return ctrl


def cubic_bezier(anchors, tangent_scale: float = 1.0 / 6.0, samples_per_segment: int = 20) -> np.ndarray:
    """Sample a piecewise cubic Bezier running through every anchor.

    Each of the ``len(anchors) - 1`` segments is evaluated at
    ``samples_per_segment + 1`` evenly spaced parameters including both
    endpoints; the duplicated joint samples are dropped on
    concatenation. Anchors are interpolated exactly. Collinear anchors
    give samples on the segment between them.

    Returns:
        (n_segments * samples_per_segment + 1, 3) positions.
    """
    if samples_per_segment < 1:
        raise ValueError("samples_per_segment must be >= 1")
    ctrl = bezier_control_points(anchors, tangent_scale)
    u = np.linspace(0.0, 1.0, samples_per_segment + 1)[:, None]
    out = []
    for i in range(ctrl.shape[0]):
        c0, c1, c2, c3 = ctrl[i]
        b = (
            (1 - u) ** 3 * c0
            + 3 * (1 - u) ** 2 * u * c1
            + 3 * (1 - u) * u**2 * c2
            + u**3 * c3
        )
        # Anchor interpolation must be exact, not just within float error.
        b[0] = c0
        b[-1] = c3
        out.append(b if not out else b[1:])
    return np.concatenate(out, axis=0)


def sample_in_cone(
    apex,
    axis,
    half_angle: float,
    radial_range: tuple[float, float],
    rng: np.random.Generator,
    n: int | None = None,
) -> np.ndarray:
    """Sample point(s) inside a truncated cone.

    Directions are uniform over the spherical cap of ``half_angle``
    around ``axis`` (uniform solid angle: cos(angle) ~ U[cos(half), 1]);
    the radius is uniform on ``radial_range``. Points are
    ``apex + r * direction``.

    Args:
        n: None returns a single (3,) point; an int returns (n, 3).
    """
    apex = _as_vec(apex, 3, "apex")
    axis = _as_vec(axis, 3, "axis")
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise ValueError("cone axis must be nonzero")
    axis = axis / norm
    if not 0.0 < half_angle <= np.pi:
        raise ValueError("half_angle must be in (0, pi]")
    r_min, r_max = float(radial_range[0]), float(radial_range[1])
    if not 0.0 <= r_min <= r_max:
        raise ValueError(f"invalid radial range ({r_min}, {r_max})")

    count = 1 if n is None else int(n)
    cos_t = rng.uniform(np.cos(half_angle), 1.0, size=count)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t**2))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=count)
    local = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=-1)

    # Basis taking local +z to the cone axis.
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    b1 = np.cross(axis, helper)
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(axis, b1)
    dirs = local[:, 0:1] * b1 + local[:, 1:2] * b2 + local[:, 2:3] * axis

    radii = rng.uniform(r_min, r_max, size=count)
    pts = apex + radii[:, None] * dirs
    return pts[0] if n is None else pts


def parabola(
    p_start,
    p_end,
    flight_time: float,
    gravity: float,
    fps: float,
    q_start=None,
    q_end=None,
) -> list[Pose]:
    """Ballistic pose sequence from p_start to p_end.

    The initial velocity is solved so the path hits ``p_end`` exactly at
    ``flight_time`` under constant acceleration (0, 0, -gravity).
    Orientation is slerped from q_start to q_end (identity when
    omitted). Frames are placed at ``round(flight_time * fps) + 1``
    evenly spaced times covering [0, flight_time], so the z coordinate
    has a constant second difference of ``-gravity * dt**2``.
    """
    p_start = _as_vec(p_start, 3, "p_start")
    p_end = _as_vec(p_end, 3, "p_end")
    if flight_time <= 0.0 or fps <= 0.0:
        raise ValueError("flight_time and fps must be positive")
    q0 = quat_identity() if q_start is None else quat_normalize(q_start)
    q1 = quat_identity() if q_end is None else quat_normalize(q_end)

    accel = np.array([0.0, 0.0, -float(gravity)])
    v0 = (p_end - p_start - 0.5 * accel * flight_time**2) / flight_time
    n = int(round(flight_time * fps)) + 1
    if n < 2:
        n = 2
    times = np.linspace(0.0, flight_time, n)
    poses = []
    for i, t in enumerate(times):
        u = i / (n - 1)
        pos = p_start + v0 * t + 0.5 * accel * t * t
        if i == 0:
            pos = p_start.copy()
        elif i == n - 1:
            pos = p_end.copy()
        poses.append(Pose(pos, slerp(q0, q1, u)))
    return poses
