"""Object geometry, stable-pose enumeration, and signed distances.

Oracles: an independent supporting-plane enumeration (qhull plane dedup
plus 2D containment from hull equations) for stability, and an SLSQP
convex-combination QP for exterior hull distance."""

import json

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.spatial import ConvexHull

from hopkit.errors import ValidationError
from hopkit.geom import Pose, quat_from_axis_angle, quat_identity, quat_rotate, random_quat
from hopkit.scene import (
    ObjectModel,
    RotatableRegion,
    StablePose,
    Workspace,
    apply_scale,
    enumerate_stable_poses,
    ground_penetration,
    hand_object_clearance,
    load_object,
    object_from_dict,
    signed_distance_to_hull,
)
from tests.conftest import CUBE_HALF, cube_corners, make_cube, make_tetra

RNG = np.random.default_rng(2718)


# ---------------------------------------------------------------------------
# Stability oracle: enumerate supporting planes straight from qhull
# simplex equations and test COM containment via 2D hull equations.


def oracle_stable_normals(obj: ObjectModel, margin: float = 1e-6) -> list[np.ndarray]:
    pts = obj.hull_points
    hull = ConvexHull(pts)
    planes = {}
    for eq in hull.equations:
        planes[tuple(np.round(eq, 7))] = eq
    stable = []
    for eq in planes.values():
        n, d = eq[:3], eq[3]
        n = n / np.linalg.norm(n)
        on_face = pts[np.abs(pts @ n + d) < 1e-8]
        # Basis spanning the plane, built from the least-aligned axis.
        helper = np.eye(3)[np.argmin(np.abs(n))]
        u = np.cross(n, helper)
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        poly2d = on_face @ np.stack([u, v], axis=1)
        com2d = obj.com @ np.stack([u, v], axis=1)
        hull2d = ConvexHull(poly2d)
        # Inside with margin iff every edge keeps at least that much slack.
        dists = com2d @ hull2d.equations[:, :2].T + hull2d.equations[:, 2]
        if np.all(dists <= -margin):
            stable.append(n)
    return stable


def normals_match(a: list[np.ndarray], b: list[np.ndarray], tol: float = 1e-7) -> bool:
    if len(a) != len(b):
        return False
    used = set()
    for n in a:
        hit = next(
            (i for i, m in enumerate(b) if i not in used and np.linalg.norm(n - m) < tol), None
        )
        if hit is None:
            return False
        used.add(hit)
    return True


def check_poses_physical(obj: ObjectModel, poses: list[StablePose]):
    """Direct statics: face on the ground, COM over the contact polygon."""
    for sp in poses:
        world = sp.pose.apply(obj.hull_points)
        assert world[:, 2].min() > -1e-9
        assert abs(world[:, 2].min()) < 1e-9
        down = quat_rotate(sp.pose.orientation, sp.support_normal)
        assert np.allclose(down, [0.0, 0.0, -1.0], atol=1e-9)
        contact = world[world[:, 2] < 1e-8][:, :2]
        com_xy = sp.pose.apply(obj.com)[:2]
        poly = ConvexHull(contact)
        dists = com_xy @ poly.equations[:, :2].T + poly.equations[:, 2]
        assert np.all(dists <= 1e-9)


def test_cube_has_six_stable_poses(cube):
    poses = enumerate_stable_poses(cube)
    assert len(poses) == 6
    check_poses_physical(cube, poses)
    lib = [sp.support_normal for sp in poses]
    assert normals_match(lib, oracle_stable_normals(cube))
    # The six resting orientations are mutually distinct.
    axes = {tuple(np.round(n, 6)) for n in lib}
    assert len(axes) == 6


def test_tetra_has_four_stable_poses(tetra):
    poses = enumerate_stable_poses(tetra)
    assert len(poses) == 4
    check_poses_physical(tetra, poses)
    assert normals_match([sp.support_normal for sp in poses], oracle_stable_normals(tetra))


def test_interior_com_keeps_all_cube_faces():
    # Each face's support prism covers the whole cube, so any interior
    # COM leaves all six faces stable.
    obj = make_cube(com=np.array([0.02, -0.01, 0.015]))
    poses = enumerate_stable_poses(obj)
    assert len(poses) == 6
    check_poses_physical(obj, poses)
    assert normals_match([sp.support_normal for sp in poses], oracle_stable_normals(obj))


def test_shifted_com_destabilizes_side_faces():
    # A COM far outside the +x face projects outside the four side-face
    # polygons; only the two x faces continue to balance.
    obj = make_cube(com=np.array([0.7, 0.0, 0.0]), with_region=False)
    poses = enumerate_stable_poses(obj)
    assert len(poses) == 2
    lib = [sp.support_normal for sp in poses]
    assert normals_match(lib, oracle_stable_normals(obj))
    kept = sorted(tuple(np.round(n, 6)) for n in lib)
    assert kept == [(-1.0, 0.0, 0.0), (1.0, 0.0, 0.0)]


def test_random_polyhedra_match_oracle():
    rng = np.random.default_rng(31)
    for _ in range(10):
        pts = rng.normal(scale=0.05, size=(rng.integers(10, 26), 3))
        com = pts.mean(axis=0)
        obj = ObjectModel(id="blob", keypoints=pts[:4], hull_points=pts, com=com)
        poses = enumerate_stable_poses(obj)
        assert poses, "centroid COM must rest on at least one face"
        check_poses_physical(obj, poses)
        assert normals_match([sp.support_normal for sp in poses], oracle_stable_normals(obj))


def test_stable_pose_dedup_merges_close_orientations(cube):
    # An absurdly wide dedup threshold collapses everything to one pose.
    poses = enumerate_stable_poses(cube, angle_dedup=2 * np.pi)
    assert len(poses) == 1


def test_ground_penetration():
    assert ground_penetration(np.zeros((0, 3))) == 0.0
    assert ground_penetration(np.array([[0.0, 0.0, 0.5], [1.0, 1.0, 0.1]])) == 0.0
    assert ground_penetration(np.array([[0.0, 0.0, -0.03], [0.0, 0.0, 0.2]])) == pytest.approx(0.03)


# ---------------------------------------------------------------------------
# Signed distance


def qp_distance(point: np.ndarray, verts: np.ndarray) -> float:
    """Oracle: min ||p - V^T w|| over the simplex of vertex weights."""
    m = len(verts)

    def objective(w):
        diff = point - w @ verts
        return float(diff @ diff)

    def jac(w):
        diff = point - w @ verts
        return -2.0 * (verts @ diff)

    res = minimize(
        objective,
        np.full(m, 1.0 / m),
        jac=jac,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * m,
        constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0}],
        options={"maxiter": 200, "ftol": 1e-14},
    )
    return float(np.sqrt(max(res.fun, 0.0)))


def test_signed_distance_outside_matches_qp(cube):
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.3, 0.3, size=(40, 3))
    outside = pts[np.abs(pts).max(axis=1) > CUBE_HALF + 0.01]
    d = signed_distance_to_hull(outside, cube)
    for i, p in enumerate(outside):
        assert d[i] == pytest.approx(qp_distance(p, cube.hull_points), abs=1e-6)


def test_signed_distance_outside_matches_qp_random_hull():
    rng = np.random.default_rng(17)
    verts = rng.normal(scale=0.04, size=(14, 3))
    obj = ObjectModel(id="blob", keypoints=verts[:4], hull_points=verts, com=verts.mean(axis=0))
    queries = rng.normal(scale=0.15, size=(25, 3))
    d = signed_distance_to_hull(queries, obj)
    for i, p in enumerate(queries):
        if d[i] > 1e-3:
            assert d[i] == pytest.approx(qp_distance(p, obj.hull_points), abs=1e-6)


def test_signed_distance_cube_closed_forms(cube):
    h = CUBE_HALF
    cases = {
        (h + 0.05, 0.0, 0.0): 0.05,                      # face
        (h + 0.03, h + 0.04, 0.0): np.hypot(0.03, 0.04),  # edge
        (h + 0.01, h + 0.02, h + 0.02): np.sqrt(0.0009),  # corner
        (0.0, 0.0, 0.0): -h,                              # center
        (h - 0.01, 0.0, 0.0): -0.01,                      # just inside a face
    }
    for p, expected in cases.items():
        got = signed_distance_to_hull(np.array([p]), cube)[0]
        assert got == pytest.approx(expected, abs=1e-9)


def test_signed_distance_zero_on_surface(cube):
    p = np.array([[CUBE_HALF, 0.0, 0.0], [CUBE_HALF, CUBE_HALF, CUBE_HALF]])
    d = signed_distance_to_hull(p, cube)
    assert np.abs(d).max() < 1e-9


def test_signed_distance_respects_pose(cube):
    pose = Pose(np.array([0.2, -0.1, 0.4]), quat_from_axis_angle([0, 0, 1], 0.8))
    rng = np.random.default_rng(8)
    local = rng.uniform(-0.2, 0.2, size=(30, 3))
    world = pose.apply(local)
    d_local = signed_distance_to_hull(local, cube)
    d_world = signed_distance_to_hull(world, cube, obj_pose=pose)
    assert np.allclose(d_local, d_world, atol=1e-9)


def test_hand_object_clearance(cube):
    pts = np.array([[CUBE_HALF + 0.02, 0.0, 0.0], [0.2, 0.2, 0.2]])
    assert hand_object_clearance(pts, cube) == pytest.approx(0.02, abs=1e-9)
    pts_pen = np.vstack([pts, [[0.0, 0.0, CUBE_HALF - 0.005]]])
    assert hand_object_clearance(pts_pen, cube) == pytest.approx(-0.005, abs=1e-9)


# ---------------------------------------------------------------------------
# RotatableRegion


def test_region_point_form_distance():
    reg = RotatableRegion(points=[[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]])
    d = reg.distance(np.array([[0.05, 0.0, 0.0], [0.2, 0.0, 0.0]]), axis=None)
    assert d[0] == pytest.approx(0.05)
    assert d[1] == pytest.approx(0.1)


def test_region_cylinder_distance():
    reg = RotatableRegion(axis_point=[0.0, 0.0, 0.0], radius=0.05, axial_range=(-0.1, 0.1))
    axis = np.array([0.0, 0.0, 1.0])
    queries = np.array(
        [
            [0.0, 0.0, 0.0],       # inside
            [0.03, 0.0, 0.05],     # inside
            [0.08, 0.0, 0.0],      # radial excess 0.03
            [0.0, 0.0, 0.15],      # axial excess 0.05
            [0.09, 0.0, 0.13],     # corner: hypot(0.04, 0.03)
        ]
    )
    d = reg.distance(queries, axis)
    assert np.allclose(d, [0.0, 0.0, 0.03, 0.05, 0.05], atol=1e-12)


def test_region_cylinder_axis_not_through_origin():
    reg = RotatableRegion(axis_point=[0.1, 0.0, 0.0], radius=0.02, axial_range=(0.0, 0.1))
    axis = np.array([0.0, 1.0, 0.0])
    d = reg.distance(np.array([[0.1, 0.05, 0.0]]), axis)
    assert d[0] == pytest.approx(0.0, abs=1e-12)
    d = reg.distance(np.array([[0.1, -0.03, 0.0]]), axis)
    assert d[0] == pytest.approx(0.03, abs=1e-12)


def test_region_cylinder_requires_axis():
    reg = RotatableRegion(axis_point=[0, 0, 0], radius=0.05, axial_range=(-0.1, 0.1))
    with pytest.raises(ValidationError):
        reg.distance(np.zeros((1, 3)), axis=None)


def test_region_validation():
    with pytest.raises(ValidationError):
        RotatableRegion()
    with pytest.raises(ValidationError):
        RotatableRegion(points=np.zeros((0, 3)))
    with pytest.raises(ValidationError):
        RotatableRegion(axis_point=[0, 0, 0], radius=-1.0, axial_range=(0, 1))
    with pytest.raises(ValidationError):
        RotatableRegion(axis_point=[0, 0, 0], radius=0.1, axial_range=(1.0, 0.0))
    with pytest.raises(ValidationError):
        RotatableRegion(radius=0.1)


def test_region_scaled_and_roundtrip():
    reg = RotatableRegion(axis_point=[0.0, 0.0, 0.01], radius=0.05, axial_range=(-0.1, 0.1))
    big = reg.scaled(2.0)
    assert big.radius == pytest.approx(0.1)
    assert big.axial_range == (pytest.approx(-0.2), pytest.approx(0.2))
    assert np.allclose(big.axis_point, [0.0, 0.0, 0.02])
    again = RotatableRegion.from_dict(json.loads(json.dumps(reg.to_dict())))
    assert np.allclose(again.axis_point, reg.axis_point)
    assert again.radius == reg.radius
    pts = RotatableRegion(points=[[0.01, 0.02, 0.03]])
    pts2 = RotatableRegion.from_dict(pts.to_dict())
    assert np.array_equal(pts2.points, pts.points)
    assert np.allclose(pts.scaled(3.0).points, [[0.03, 0.06, 0.09]])


# ---------------------------------------------------------------------------
# ObjectModel


def test_object_validation():
    corners = cube_corners()
    with pytest.raises(ValidationError, match="keypoints"):
        ObjectModel(id="o", keypoints=corners[:3], hull_points=corners, com=np.zeros(3))
    with pytest.raises(ValidationError, match="finite"):
        ObjectModel(
            id="o", keypoints=np.full((4, 3), np.nan), hull_points=corners, com=np.zeros(3)
        )
    flat = corners.copy()
    flat[:, 2] = 0.0
    with pytest.raises(ValidationError, match="hull"):
        ObjectModel(id="o", keypoints=corners[:4], hull_points=flat, com=np.zeros(3))
    with pytest.raises(ValidationError, match="axis"):
        ObjectModel(
            id="o", keypoints=corners[:4], hull_points=corners, com=np.zeros(3),
            rotatable=RotatableRegion(points=[[0, 0, 0]]),
        )
    with pytest.raises(ValidationError, match="nonzero"):
        ObjectModel(
            id="o", keypoints=corners[:4], hull_points=corners, com=np.zeros(3),
            axis=[0.0, 0.0, 0.0],
        )


def test_object_axis_normalized(cube):
    obj = ObjectModel(
        id="o", keypoints=cube.keypoints, hull_points=cube.hull_points, com=cube.com,
        axis=[0.0, 0.0, 5.0],
    )
    assert np.allclose(obj.axis, [0.0, 0.0, 1.0])


def test_object_world_keypoints(cube):
    pose = Pose(np.array([0.1, 0.2, 0.3]), random_quat(RNG))
    world = cube.world_keypoints(pose)
    assert np.allclose(world, pose.apply(cube.keypoints), atol=1e-12)


def test_object_dict_roundtrip(cube, tmp_path):
    doc = cube.to_dict()
    again = object_from_dict(json.loads(json.dumps(doc)))
    assert again.id == cube.id
    assert np.array_equal(again.keypoints, cube.keypoints)
    assert np.array_equal(again.hull_points, cube.hull_points)
    assert np.array_equal(again.com, cube.com)
    assert np.allclose(again.axis, cube.axis)
    assert again.rotatable is not None
    path = tmp_path / "cube.json"
    path.write_text(json.dumps(doc))
    loaded = load_object(str(path))
    assert loaded.id == cube.id


def test_object_from_dict_rejects_malformed():
    with pytest.raises(ValidationError, match="malformed"):
        object_from_dict({"id": "x"})


def test_apply_scale(cube):
    big = apply_scale(cube, 2.0)
    assert big.scale == 2.0
    assert np.allclose(big.hull_points, cube.hull_points * 2.0)
    assert np.allclose(big.com, cube.com * 2.0)
    assert big.hull.volume == pytest.approx(cube.hull.volume * 8.0, rel=1e-9)
    assert big.rotatable.radius == pytest.approx(cube.rotatable.radius * 2.0)
    same = apply_scale(cube, 1.0)
    assert np.array_equal(same.hull_points, cube.hull_points)
    for bad in (0.0, -1.0, np.inf):
        with pytest.raises(ValidationError):
            apply_scale(cube, bad)


# ---------------------------------------------------------------------------
# Workspace


def test_workspace_defaults_and_contains():
    ws = Workspace()
    assert ws.contains(np.array([[0.0, 0.0, 0.4]]))
    assert ws.contains(np.array([0.5, 0.5, 0.8]))
    assert not ws.contains(np.array([[0.51, 0.0, 0.4]]))
    assert not ws.contains(np.array([[0.0, 0.0, -0.1]]))


def test_workspace_sampling():
    ws = Workspace()
    rng = np.random.default_rng(4)
    for _ in range(50):
        p = ws.sample_position(rng, margin=0.1)
        assert np.all(p >= ws.lo + 0.1) and np.all(p <= ws.hi - 0.1)
    a = Workspace().sample_position(np.random.default_rng(6))
    b = Workspace().sample_position(np.random.default_rng(6))
    assert np.array_equal(a, b)
    with pytest.raises(ValidationError):
        ws.sample_position(rng, margin=10.0)


def test_workspace_validation():
    with pytest.raises(ValidationError):
        Workspace(lo=np.array([0.5, -0.5, 0.0]), hi=np.array([-0.5, 0.5, 0.8]))


def test_workspace_contains_scalar_point_list():
    assert Workspace().contains([0.1, 0.1, 0.1])
