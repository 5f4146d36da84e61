"""Object models, workspace bounds, and contact geometry.

Objects are rigid bodies described by semantic keypoints, a convex hull
point cloud, a center of mass, and (optionally) a rotatable region with
a rotation axis for in-hand turning. Resting poses are found
geometrically: a hull face supports the object iff the center of mass
projects strictly inside that face, which stands in for running physics
settling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull

from .errors import ValidationError
from .geom import Pose, quat_from_axis_angle, same_rotation


@dataclass(frozen=True)
class RotatableRegion:
    """Graspable sub-surface that permits rotation about the object axis.

    Exactly one descriptor form is set:

    * ``points``: explicit surface points in the object frame.
    * cylinder: points within ``radius`` of the axis line through
      ``axis_point`` (object frame) with axial coordinate in
      ``axial_range``.
    """

    points: np.ndarray | None = None
    axis_point: np.ndarray | None = None
    radius: float | None = None
    axial_range: tuple[float, float] | None = None

    def __post_init__(self):
        has_points = self.points is not None
        has_cyl = self.radius is not None
        if has_points == has_cyl:
            raise ValidationError(
                "rotatable region needs either 'points' or a cylinder descriptor"
            )
        if has_points:
            pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
            if pts.shape[0] == 0:
                raise ValidationError("rotatable region point set is empty")
            pts.setflags(write=False)
            object.__setattr__(self, "points", pts)
        else:
            if self.axis_point is None or self.axial_range is None:
                raise ValidationError(
                    "cylinder region requires axis_point, radius, and axial_range"
                )
            ap = np.asarray(self.axis_point, dtype=np.float64).reshape(3)
            ap.setflags(write=False)
            object.__setattr__(self, "axis_point", ap)
            object.__setattr__(self, "radius", float(self.radius))
            lo, hi = float(self.axial_range[0]), float(self.axial_range[1])
            if self.radius < 0 or lo > hi:
                raise ValidationError("cylinder region has invalid radius or range")
            object.__setattr__(self, "axial_range", (lo, hi))

    def distance(self, points: np.ndarray, axis: np.ndarray | None) -> np.ndarray:
        """Distance from object-frame point(s) to the region (0 = touching)."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.points is not None:
            diff = points[:, None, :] - self.points[None, :, :]
            return np.linalg.norm(diff, axis=-1).min(axis=1)
        if axis is None:
            raise ValidationError("cylinder region requires the object rotation axis")
        axis = axis / np.linalg.norm(axis)
        rel = points - self.axis_point
        t = rel @ axis
        radial = np.linalg.norm(rel - t[:, None] * axis[None, :], axis=1)
        lo, hi = self.axial_range
        axial_excess = np.maximum(np.maximum(t - hi, lo - t), 0.0)
        radial_excess = np.maximum(radial - self.radius, 0.0)
        return np.hypot(axial_excess, radial_excess)

    def scaled(self, s: float) -> "RotatableRegion":
        if self.points is not None:
            return RotatableRegion(points=self.points * s)
        lo, hi = self.axial_range
        return RotatableRegion(
            axis_point=self.axis_point * s,
            radius=self.radius * s,
            axial_range=(lo * s, hi * s),
        )

    def to_dict(self) -> dict:
        if self.points is not None:
            return {"points": self.points.tolist()}
        return {
            "axis_point": self.axis_point.tolist(),
            "radius": self.radius,
            "axial_range": list(self.axial_range),
        }

    @staticmethod
    def from_dict(doc: dict) -> "RotatableRegion":
        if "points" in doc:
            return RotatableRegion(points=doc["points"])
        return RotatableRegion(
            axis_point=doc.get("axis_point"),
            radius=doc.get("radius"),
            axial_range=tuple(doc.get("axial_range", ())) or None,
        )


@dataclass(frozen=True)
class ObjectModel:
    """Rigid object: keypoints, convex hull cloud, COM, optional rotation axis.

    All geometry lives in the object's local frame. ``scale`` records the
    nominal scale the geometry is currently at (1.0 as authored).
    """

    id: str
    keypoints: np.ndarray
    hull_points: np.ndarray
    com: np.ndarray
    axis: np.ndarray | None = None
    rotatable: RotatableRegion | None = None
    scale: float = 1.0

    def __post_init__(self):
        kp = np.asarray(self.keypoints, dtype=np.float64).reshape(-1, 3)
        hp = np.asarray(self.hull_points, dtype=np.float64).reshape(-1, 3)
        com = np.asarray(self.com, dtype=np.float64).reshape(3)
        if kp.shape[0] < 4:
            raise ValidationError(f"object {self.id!r}: need >= 4 keypoints, got {kp.shape[0]}")
        if not (np.all(np.isfinite(kp)) and np.all(np.isfinite(hp)) and np.all(np.isfinite(com))):
            raise ValidationError(f"object {self.id!r}: geometry must be finite")
        try:
            hull = ConvexHull(hp)
        except Exception as exc:
            raise ValidationError(f"object {self.id!r}: degenerate hull ({exc})") from exc
        if hull.volume <= 0.0:
            raise ValidationError(f"object {self.id!r}: hull volume must be positive")
        axis = self.axis
        if self.rotatable is not None and axis is None:
            raise ValidationError(f"object {self.id!r}: rotatable region requires an axis")
        if axis is not None:
            axis = np.asarray(axis, dtype=np.float64).reshape(3)
            n = np.linalg.norm(axis)
            if n < 1e-9:
                raise ValidationError(f"object {self.id!r}: rotation axis must be nonzero")
            axis = axis / n
            axis.setflags(write=False)
        for arr in (kp, hp, com):
            arr.setflags(write=False)
        object.__setattr__(self, "keypoints", kp)
        object.__setattr__(self, "hull_points", hp)
        object.__setattr__(self, "com", com)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "_hull", hull)

    @property
    def hull(self) -> ConvexHull:
        return self._hull

    def world_keypoints(self, pose: Pose) -> np.ndarray:
        return pose.apply(self.keypoints)

    def to_dict(self) -> dict:
        doc = {
            "id": self.id,
            "keypoints": self.keypoints.tolist(),
            "hull": self.hull_points.tolist(),
            "com": self.com.tolist(),
            "scale": self.scale,
        }
        if self.axis is not None:
            doc["axis"] = self.axis.tolist()
        if self.rotatable is not None:
            doc["rotatable"] = self.rotatable.to_dict()
        return doc


def object_from_dict(doc: dict) -> ObjectModel:
    try:
        rotatable = RotatableRegion.from_dict(doc["rotatable"]) if "rotatable" in doc else None
        return ObjectModel(
            id=str(doc["id"]),
            keypoints=doc["keypoints"],
            hull_points=doc["hull"],
            com=doc["com"],
            axis=doc.get("axis"),
            rotatable=rotatable,
            scale=float(doc.get("scale", 1.0)),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed object document: {exc}") from exc


def load_object(path: str) -> ObjectModel:
    with open(path, "r", encoding="utf-8") as fh:
        return object_from_dict(json.load(fh))


def apply_scale(obj: ObjectModel, s: float) -> ObjectModel:
    """Uniformly scale all geometry about the object origin.

    The returned model's nominal ``scale`` field is set to ``s``.
    apply_scale(obj, 1.0) returns geometry identical to obj.
    """
    if s <= 0.0 or not np.isfinite(s):
        raise ValidationError(f"scale must be positive and finite, got {s}")
    return ObjectModel(
        id=obj.id,
        keypoints=obj.keypoints * s,
        hull_points=obj.hull_points * s,
        com=obj.com * s,
        axis=None if obj.axis is None else obj.axis.copy(),
        rotatable=None if obj.rotatable is None else obj.rotatable.scaled(s),
        scale=s,
    )


@dataclass(frozen=True)
class Workspace:
    """Axis-aligned reachable box. Default: x, y in [-0.5, 0.5], z in [0, 0.8]."""

    lo: np.ndarray = field(default_factory=lambda: np.array([-0.5, -0.5, 0.0]))
    hi: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5, 0.8]))

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        if np.any(lo >= hi):
            raise ValidationError("workspace lower bound must be below upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, points, tol: float = 1e-9) -> bool:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return bool(
            np.all(points >= self.lo - tol) and np.all(points <= self.hi + tol)
        )

    def sample_position(self, rng: np.random.Generator, margin: float = 0.0) -> np.ndarray:
        lo = self.lo + margin
        hi = self.hi - margin
        if np.any(lo >= hi):
            raise ValidationError("workspace margin leaves an empty box")
        return rng.uniform(lo, hi)


@dataclass(frozen=True)
class StablePose:
    """A resting pose: object orientation plus the z offset that puts the
    supporting hull face exactly on the ground plane."""

    pose: Pose
    face_index: int
    support_normal: np.ndarray


def _merged_hull_faces(hull: ConvexHull, tol: float = 1e-8) -> list[tuple[np.ndarray, float, np.ndarray]]:
    """Group coplanar hull simplices into faces.

    Returns a list of (outward unit normal, plane offset, vertex index
    array) triples, one per planar face. The plane satisfies
    n . x = offset for points on the face.
    """
    groups: list[list[int]] = []
    keys: list[np.ndarray] = []
    eqs = hull.equations  # n . x + d = 0, n outward
    for i in range(eqs.shape[0]):
        placed = False
        for gi, key in enumerate(keys):
            if np.all(np.abs(eqs[i] - key) < tol):
                groups[gi].append(i)
                placed = True
                break
        if not placed:
            keys.append(eqs[i])
            groups.append([i])
    faces = []
    for gi, simplex_ids in enumerate(groups):
        verts = np.unique(hull.simplices[simplex_ids].ravel())
        normal = keys[gi][:3]
        normal = normal / np.linalg.norm(normal)
        offset = -keys[gi][3]
        faces.append((normal, offset, verts))
    return faces


def _point_in_convex_polygon_2d(point: np.ndarray, polygon: np.ndarray, margin: float) -> bool:
    """Strict containment of a 2d point in a convex polygon (ccw or cw)."""
    n = polygon.shape[0]
    if n < 3:
        return False
    crosses = []
    for i in range(n):
        a = polygon[i]
        b = polygon[(i + 1) % n]
        crosses.append((b[0] - a[0]) * (point[1] - a[1]) - (b[1] - a[1]) * (point[0] - a[0]))
    crosses = np.asarray(crosses)
    return bool(np.all(crosses > margin) or np.all(crosses < -margin))


def enumerate_stable_poses(
    obj: ObjectModel, angle_dedup: float = np.deg2rad(1.0), margin: float = 1e-6
) -> list[StablePose]:
    """Resting poses on the ground plane, one per statically stable hull face.

    A face is stable iff the COM projected along the face normal lands
    strictly inside the face polygon (margin in meters). The returned
    pose rotates the face normal onto -z and lifts the object so the
    face sits exactly on z = 0. Orientations closer than
    ``angle_dedup`` radians are deduplicated.
    """
    hull = obj.hull
    down = np.array([0.0, 0.0, -1.0])
    poses: list[StablePose] = []
    for face_idx, (normal, offset, vert_ids) in enumerate(_merged_hull_faces(hull)):
        verts = obj.hull_points[vert_ids]
        # 2d face coordinates for the containment test.
        helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = np.cross(normal, helper)
        u /= np.linalg.norm(u)
        v = np.cross(normal, u)
        verts2d = np.stack([verts @ u, verts @ v], axis=1)
        hull2d = ConvexHull(verts2d)
        polygon = verts2d[hull2d.vertices]
        com2d = np.array([obj.com @ u, obj.com @ v])
        if not _point_in_convex_polygon_2d(com2d, polygon, margin):
            continue
        # Rotate the outward normal onto straight down.
        c = float(np.dot(normal, down))
        if c >= 1.0 - 1e-12:
            q = np.array([1.0, 0.0, 0.0, 0.0])
        elif c <= -1.0 + 1e-12:
            # Normal points straight up: any horizontal axis flips it down.
            flip_axis = (
                np.array([1.0, 0.0, 0.0])
                if abs(normal[0]) < 1.0 - 1e-9
                else np.array([0.0, 1.0, 0.0])
            )
            q = quat_from_axis_angle(flip_axis, np.pi)
        else:
            rot_axis = np.cross(normal, down)
            rot_axis = rot_axis / np.linalg.norm(rot_axis)
            q = quat_from_axis_angle(rot_axis, float(np.arccos(c)))
        rotated = Pose(np.zeros(3), q).apply(obj.hull_points)
        lift = -float(rotated[:, 2].min())
        pose = Pose(np.array([0.0, 0.0, lift]), q)
        if any(same_rotation(pose.orientation, p.pose.orientation, angle_dedup) for p in poses):
            continue
        poses.append(StablePose(pose=pose, face_index=face_idx, support_normal=normal.copy()))
    return poses


def ground_penetration(points) -> float:
    """Depth of the deepest point below z = 0 (0 when none are below)."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return 0.0
    return float(max(0.0, -points.reshape(-1, 3)[:, 2].min()))


def _point_triangle_distances(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Distances from P points to T triangles, vectorized: (P, T)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]  # each (T, 3)
    ab = b - a
    ac = c - a
    p = points[:, None, :]  # (P, 1, 3)
    ap = p - a
    d1 = np.einsum("tk,ptk->pt", ab, ap)
    d2 = np.einsum("tk,ptk->pt", ac, ap)
    bp = p - b
    d3 = np.einsum("tk,ptk->pt", ab, bp)
    d4 = np.einsum("tk,ptk->pt", ac, bp)
    cp = p - c
    d5 = np.einsum("tk,ptk->pt", ab, cp)
    d6 = np.einsum("tk,ptk->pt", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    denom_vb = d2 - d6
    t_edge_ac = np.divide(d2, denom_vb, out=np.zeros_like(d2), where=np.abs(denom_vb) > 1e-300)
    denom_vc = (d4 - d3) + (d5 - d6)
    t_edge_bc = np.divide(
        d4 - d3, denom_vc, out=np.zeros_like(d4), where=np.abs(denom_vc) > 1e-300
    )
    denom = va + vb + vc
    v_in = np.divide(vb, denom, out=np.zeros_like(vb), where=np.abs(denom) > 1e-300)
    w_in = np.divide(vc, denom, out=np.zeros_like(vc), where=np.abs(denom) > 1e-300)

    ab_len2 = np.einsum("tk,tk->t", ab, ab)
    ac_len2 = np.einsum("tk,tk->t", ac, ac)
    t_ab = np.divide(d1, ab_len2, out=np.zeros_like(d1), where=ab_len2 > 1e-300)
    t_ac = np.divide(d2, ac_len2, out=np.zeros_like(d2), where=ac_len2 > 1e-300)

    # Region selection per Ericson's closest-point-on-triangle. The
    # region tests replicate the scalar algorithm's early-return chain,
    # so np.where applies them in reverse priority: the interior formula
    # is the default and vertex A wins every tie.
    closest = a + v_in[..., None] * ab + w_in[..., None] * ac  # interior default
    # Edge BC region.
    on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    t_bc = np.clip(t_edge_bc, 0.0, 1.0)
    cand_bc = b + t_bc[..., None] * (c - b)
    # Edge AC region.
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t_ac_cl = np.clip(t_edge_ac, 0.0, 1.0)
    cand_ac = a + t_ac_cl[..., None] * ac
    # Edge AB region.
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    t_ab_cl = np.clip(t_ab, 0.0, 1.0)
    cand_ab = a + t_ab_cl[..., None] * ab
    # Vertex regions.
    on_a = (d1 <= 0) & (d2 <= 0)
    on_b = (d3 >= 0) & (d4 <= d3)
    on_c = (d6 >= 0) & (d5 <= d6)

    closest = np.where(on_bc[..., None], cand_bc, closest)
    closest = np.where(on_ac[..., None], cand_ac, closest)
    closest = np.where(on_c[..., None], np.broadcast_to(c, closest.shape), closest)
    closest = np.where(on_ab[..., None], cand_ab, closest)
    closest = np.where(on_b[..., None], np.broadcast_to(b, closest.shape), closest)
    closest = np.where(on_a[..., None], np.broadcast_to(a, closest.shape), closest)
    return np.linalg.norm(p - closest, axis=-1)


def signed_distance_to_hull(points, obj: ObjectModel, obj_pose: Pose | None = None) -> np.ndarray:
    """Signed distance from world point(s) to the object's convex hull.

    Positive outside, negative inside (depth below the nearest face
    plane). ``obj_pose`` maps the object frame to world; identity when
    omitted.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if obj_pose is not None:
        points = obj_pose.inverse().apply(points)
    hull = obj.hull
    eqs = hull.equations
    plane = points @ eqs[:, :3].T + eqs[:, 3]  # (P, F), negative inside
    inside = np.all(plane <= 1e-12, axis=1)
    out = np.empty(points.shape[0])
    out[inside] = plane[inside].max(axis=1)
    if np.any(~inside):
        tri = obj.hull_points[hull.simplices]
        dists = _point_triangle_distances(points[~inside], tri)
        out[~inside] = dists.min(axis=1)
    return out


def hand_object_clearance(points, obj: ObjectModel, obj_pose: Pose | None = None) -> float:
    """Minimum signed hand-to-hull distance (negative = penetration)."""
    return float(signed_distance_to_hull(points, obj, obj_pose).min())
