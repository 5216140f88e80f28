import math

import numpy as np
import pytest

from trsim.cloud import PointCloud
from trsim.errors import DegenerateNeighborhood, EmptyStream, EmptySubmap, NonMonotonicTime
from trsim.se3 import Transform, Twist, exp_map
from trsim.teachmap import (PoseGraph, TeachPath, build_pose_graph,
                            estimate_normals, extract_submaps, load_graph,
                            load_teach_path, record_teach, save_graph,
                            save_teach_path)

from conftest import random_transform


# --- record_teach ------------------------------------------------------------

def test_record_single_pose():
    path = record_teach([(0.0, Transform.identity())])
    assert len(path.steps) == 0


def test_record_constant_velocity():
    # 1 m/s for 10 s sampled at 100 Hz, resampled to 20 Hz: 200 equal steps.
    stream = [(t, Transform.from_translation(t, 0, 0))
              for t in np.arange(0.0, 10.001, 0.01)]
    path = record_teach(stream)
    assert len(path.steps) == 200
    for s in path.steps:
        assert np.allclose(s.translation, [0.05, 0, 0], atol=1e-9)
        assert s.rotation_angle() < 1e-9


def test_record_circular_drive_matches_screw():
    # Radius 5 m at 0.5 rad/s: every 20 Hz step equals exp(twist * 0.05).
    R, w = 5.0, 0.5
    v = R * w
    def pose(t):
        ang = w * t
        return Transform.from_xyyaw(R * math.sin(ang), R * (1 - math.cos(ang)), ang)
    stream = [(t, pose(t)) for t in np.arange(0.0, 8.0, 1.0 / 50.0)]
    path = record_teach(stream)
    expected = exp_map(Twist.planar(v, w).scaled(0.05))
    for s in path.steps:
        assert s.is_close(expected, rot_tol=1e-6, trans_tol=1e-6)


def test_record_rejects_empty_and_nonmonotonic():
    with pytest.raises(EmptyStream):
        record_teach([])
    with pytest.raises(NonMonotonicTime):
        record_teach([(0.0, Transform.identity()), (0.0, Transform.identity())])


def test_recorded_path_compounds_to_stream():
    stream = [(t, Transform.from_xyyaw(2 * t, 0.3 * math.sin(t), 0.1 * t))
              for t in np.arange(0.0, 5.001, 0.05)]
    path = record_teach(stream)
    poses = path.poses()
    # Compounded poses hit the sampled stream within interpolation error.
    assert poses[-1].is_close(stream[-1][1], rot_tol=1e-6, trans_tol=1e-6)


# --- build_pose_graph ----------------------------------------------------------

def _straight_path(length=100.0, rate=20.0, speed=1.0):
    n = int(length / speed * rate)
    step = Transform.from_translation(speed / rate, 0, 0)
    return TeachPath(Transform.identity(), tuple([step] * n), rate)


def test_straight_graph_vertex_positions():
    graph = build_pose_graph(_straight_path(100.0), 5.0, math.pi / 4)
    assert len(graph.vertices) == 21
    for i, v in enumerate(graph.vertices):
        assert v.world_pose.translation[0] == pytest.approx(5.0 * i, abs=1e-9)


def test_inplace_rotation_graph():
    step = Transform.rot_z(math.pi / 160)  # 160 steps of pi/160 = pi total
    path = TeachPath(Transform.identity(), tuple([step] * 160), 20.0)
    graph = build_pose_graph(path, 5.0, math.pi / 8)
    assert len(graph.vertices) == 9


def _s_curve_path():
    steps = []
    for k in range(500):
        w = 0.4 * math.sin(2 * math.pi * k / 250.0)
        steps.append(exp_map(Twist.planar(1.2, w).scaled(0.05)))
    return TeachPath(Transform.identity(), tuple(steps), 20.0)


def test_scurve_vertices_match_brute_force_scanner():
    path = _s_curve_path()
    dist, ang = 3.0, math.radians(15.0)
    graph = build_pose_graph(path, dist, ang)
    # Independent scanner over the raw steps.
    expected_idx = [0]
    ct, cr = 0.0, 0.0
    for i, s in enumerate(path.steps):
        ct += float(np.linalg.norm(s.translation))
        cr += s.rotation_angle()
        if ct >= dist - 1e-9 or cr >= ang - 1e-12:
            expected_idx.append(i + 1)
            ct, cr = 0.0, 0.0
    if expected_idx[-1] != len(path.steps):
        expected_idx.append(len(path.steps))
    poses = path.poses()
    assert len(graph.vertices) == len(expected_idx)
    for v, idx in zip(graph.vertices, expected_idx):
        assert v.world_pose.is_close(poses[idx], 1e-9, 1e-9)


def test_threshold_soundness():
    path = _s_curve_path()
    dist, ang = 3.0, math.radians(15.0)
    graph = build_pose_graph(path, dist, ang)
    poses = path.poses()
    positions = [tuple(np.round(v.world_pose.translation, 9)) for v in graph.vertices]
    vert_at = {}
    for v in graph.vertices:
        for i, p in enumerate(poses):
            if v.world_pose.is_close(p, 1e-9, 1e-9):
                vert_at[v.id] = i
                break
    for (a, b) in zip(graph.vertices[:-1], graph.vertices[1:]):
        ia, ib = vert_at[a.id], vert_at[b.id]
        ct, cr = 0.0, 0.0
        for s in path.steps[ia:ib - 1]:  # interior steps, excluding the trigger
            ct += float(np.linalg.norm(s.translation))
            cr += s.rotation_angle()
        if ib - 1 > ia and ib != len(path.steps):
            assert ct < dist and cr < ang


def test_graph_chain_consistency():
    path = _s_curve_path()
    graph = build_pose_graph(path, 3.0, math.radians(15.0))
    pose = graph.vertices[0].world_pose
    for e in graph.edges:
        pose = pose @ e.relative
    assert pose.is_close(graph.vertices[-1].world_pose, 1e-6, 1e-6)


def test_relative_pose_both_directions():
    path = _s_curve_path()
    graph = build_pose_graph(path, 3.0, math.radians(15.0))
    t_03 = graph.relative_pose(0, 3)
    expect = graph.vertices[0].world_pose.inverse() @ graph.vertices[3].world_pose
    assert t_03.is_close(expect, 1e-9, 1e-9)
    t_30 = graph.relative_pose(3, 0)
    assert (t_03 @ t_30).is_close(Transform.identity(), 1e-9, 1e-9)


# --- estimate_normals ----------------------------------------------------------

def test_plane_normals(rng):
    pts = np.column_stack([rng.uniform(-5, 5, 400), rng.uniform(-5, 5, 400),
                           np.zeros(400)])
    out = estimate_normals(PointCloud(pts), k=8, toward=np.array([0.0, 0.0, 10.0]))
    assert len(out) == 400
    assert np.allclose(out.normals[:, 2], 1.0, atol=1e-9)


def test_sphere_normals_radial(rng):
    # ~100 pts/m^2 on a radius-5 sphere; k=12 normals within 2 deg of radial.
    n = int(100 * 4 * math.pi * 25)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    pts = 5.0 * v
    out = estimate_normals(PointCloud(pts), k=12)
    radial = out.points / np.linalg.norm(out.points, axis=1, keepdims=True)
    dots = np.abs(np.einsum("ij,ij->i", out.normals, radial))
    worst = math.degrees(math.acos(np.min(dots)))
    assert worst < 2.0


def test_collinear_degenerate():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
    with pytest.raises(DegenerateNeighborhood):
        estimate_normals(PointCloud(pts), k=2)


def test_normals_rigid_invariance(rng):
    pts = np.column_stack([rng.uniform(-3, 3, 500), rng.uniform(-3, 3, 500),
                           0.2 * rng.standard_normal(500)])
    base = estimate_normals(PointCloud(pts), k=10)
    g = random_transform(rng)
    moved = estimate_normals(PointCloud(g.apply(pts)), k=10)
    rotated = base.normals @ g.rotation.T
    dots = np.abs(np.einsum("ij,ij->i", moved.normals, rotated))
    assert np.min(dots) > 1.0 - 1e-6  # equal up to sign


# --- extract_submaps -----------------------------------------------------------

def _uniform_cloud(rng, half=20.0, n=20000):
    pts = np.column_stack([rng.uniform(-half, half, n), rng.uniform(-half, half, n),
                           rng.uniform(-1.0, 1.0, n)])
    return PointCloud(pts)


def _single_vertex_graph(pose):
    g = PoseGraph()
    from trsim.teachmap import Vertex
    g.vertices.append(Vertex(0, pose))
    return g


def test_submap_crop_definition(rng):
    cloud = _uniform_cloud(rng)
    graph = _single_vertex_graph(Transform.identity())
    out = extract_submaps(cloud, graph, radius=10.0, height=4.0)
    sm = out.vertices[0].submap
    r2 = sm.cloud.points[:, 0] ** 2 + sm.cloud.points[:, 1] ** 2
    assert np.all(r2 <= 100.0 + 1e-9)
    assert np.all(np.abs(sm.cloud.points[:, 2]) <= 2.0 + 1e-9)


def test_submap_rotated_vertex_frame(rng):
    cloud = _uniform_cloud(rng)
    pose = Transform.from_xyyaw(3.0, -2.0, math.pi / 2)
    graph = _single_vertex_graph(pose)
    out = extract_submaps(cloud, graph, radius=8.0, height=4.0)
    sm = out.vertices[0].submap
    # Submap points re-expressed in world must be original cloud points.
    world_pts = pose.apply(sm.cloud.points)
    from scipy.spatial import cKDTree
    d, _ = cKDTree(cloud.points).query(world_pts)
    assert np.max(d) < 1e-9


def test_submap_exact_count(rng):
    # Known membership: count points inside the cylinder by brute force.
    cloud = _uniform_cloud(rng, half=15.0, n=5000)
    graph = _single_vertex_graph(Transform.from_translation(1.0, 2.0, 0.0))
    radius, height = 7.0, 1.5
    out = extract_submaps(cloud, graph, radius=radius, height=height)
    local = (cloud.points - np.array([1.0, 2.0, 0.0]))
    inside = (local[:, 0] ** 2 + local[:, 1] ** 2 <= radius ** 2) \
        & (np.abs(local[:, 2]) <= height / 2)
    # The normal-estimation step may drop degenerate points; on this dense
    # random cloud none are degenerate.
    assert len(out.vertices[0].submap.cloud) == int(np.count_nonzero(inside))


def test_empty_submap_raises(rng):
    cloud = _uniform_cloud(rng, half=20.0, n=2000)
    graph = _single_vertex_graph(Transform.from_translation(200.0, 0, 0))
    with pytest.raises(EmptySubmap):
        extract_submaps(cloud, graph, radius=5.0, height=2.0)


def test_submap_point_cap(rng):
    cloud = _uniform_cloud(rng, half=5.0, n=30000)
    graph = _single_vertex_graph(Transform.identity())
    out = extract_submaps(cloud, graph, radius=10.0, height=4.0, point_cap=1000)
    assert len(out.vertices[0].submap.cloud) == 1000


def test_submap_completeness(rng):
    # Union of submaps covers every map point within radius of any vertex.
    cloud = _uniform_cloud(rng, half=30.0, n=8000)
    path = _straight_path(15.0)
    graph = build_pose_graph(path, 5.0, math.pi / 4)
    out = extract_submaps(cloud, graph, radius=10.0, height=4.0)
    covered = set()
    for v in out.vertices:
        world_pts = v.world_pose.apply(v.submap.cloud.points)
        from scipy.spatial import cKDTree
        d, idx = cKDTree(cloud.points).query(world_pts)
        covered.update(idx.tolist())
    for i, p in enumerate(cloud.points):
        if abs(p[2]) > 2.0 - 1e-9:
            continue
        for v in out.vertices:
            local = v.world_pose.inverse().apply(p)
            if local[0] ** 2 + local[1] ** 2 <= 100.0 - 1e-9 and abs(local[2]) <= 2.0 - 1e-9:
                assert i in covered
                break


def test_normals_estimated_before_cropping(rng):
    # A cloud plane cut at the cylinder edge: normals near the boundary match
    # the full-plane normal because estimation ran on the whole cloud.
    pts = np.column_stack([rng.uniform(-20, 20, 8000), rng.uniform(-20, 20, 8000),
                           np.zeros(8000)])
    graph = _single_vertex_graph(Transform.identity())
    out = extract_submaps(PointCloud(pts), graph, radius=10.0, height=2.0)
    sm = out.vertices[0].submap
    edge = sm.cloud.points[:, 0] ** 2 + sm.cloud.points[:, 1] ** 2 > 81.0
    assert np.allclose(np.abs(sm.cloud.normals[edge, 2]), 1.0, atol=1e-6)


# --- serialization -------------------------------------------------------------

def test_graph_roundtrip_bit_exact(tmp_path, rng):
    cloud = _uniform_cloud(rng, half=30.0, n=6000)
    graph = build_pose_graph(_s_curve_path(), 5.0, math.radians(20.0))
    graph = extract_submaps(cloud, graph, radius=12.0, height=4.0)
    save_graph(graph, tmp_path / "g")
    back = load_graph(tmp_path / "g")
    assert len(back.vertices) == len(graph.vertices)
    for a, b in zip(graph.vertices, back.vertices):
        assert np.array_equal(a.world_pose.matrix34(), b.world_pose.matrix34())
        assert np.array_equal(a.submap.cloud.points, b.submap.cloud.points)
        assert np.array_equal(a.submap.cloud.normals, b.submap.cloud.normals)
    for a, b in zip(graph.edges, back.edges):
        assert np.array_equal(a.relative.matrix34(), b.relative.matrix34())
    # Saving the loaded graph reproduces identical bytes.
    save_graph(back, tmp_path / "g2")
    assert (tmp_path / "g" / "graph.txt").read_bytes() == (tmp_path / "g2" / "graph.txt").read_bytes()


def test_teach_path_roundtrip(tmp_path):
    path = _s_curve_path()
    save_teach_path(path, tmp_path / "p.txt")
    back = load_teach_path(tmp_path / "p.txt")
    assert back.rate == path.rate
    assert len(back.steps) == len(path.steps)
    for a, b in zip(path.steps, back.steps):
        assert np.array_equal(a.matrix34(), b.matrix34())
