"""Teach product: pose-graph construction and cylindrical submap extraction.

A taught drive is stored as a start pose plus relative transforms at a fixed
rate.  The pose graph keeps a vertex whenever enough distance or rotation has
accumulated, owns a cylindrical crop of the map cloud per vertex, and chains
vertices with relative-transform edges.  Everything downstream of teaching
consumes only the edges: vertex world poses are simulation bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud, load_ply, save_ply
from .errors import (DegenerateNeighborhood, EmptyStream, EmptySubmap,
                     NonMonotonicTime)
from .se3 import Transform, interpolate

DEFAULT_RATE = 20.0
DEFAULT_DIST_THRESHOLD = 5.0
DEFAULT_ANGLE_THRESHOLD = math.radians(20.0)
DEFAULT_SUBMAP_RADIUS = 25.0
DEFAULT_SUBMAP_HEIGHT = 10.0
SUBMAP_POINT_CAP = 200_000
MIN_SUBMAP_POINTS = 50
DEFAULT_NORMAL_K = 16

# Normals are flipped to face this point in the vertex frame (sensor-facing).
_SENSOR_REF = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class TeachPath:
    """Taught trajectory: absolute start plus fixed-rate relative steps."""

    start_pose: Transform
    steps: tuple[Transform, ...]
    rate: float = DEFAULT_RATE

    def poses(self) -> list[Transform]:
        """Compound the steps into the absolute pose sequence."""
        out = [self.start_pose]
        for step in self.steps:
            out.append(out[-1] @ step)
        return out

    def length(self) -> float:
        return float(sum(np.linalg.norm(s.translation) for s in self.steps))


@dataclass(frozen=True)
class Submap:
    """Cylindrical crop of the map cloud, expressed in its vertex frame."""

    vertex_id: int
    cloud: PointCloud
    radius: float
    height: float


@dataclass
class Vertex:
    id: int
    world_pose: Transform
    submap: Submap | None = None


@dataclass
class Edge:
    from_id: int
    to_id: int
    relative: Transform


@dataclass
class PoseGraph:
    """Topometric teach map: a single chain of vertices joined by relative edges."""

    vertices: list[Vertex] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    rate: float = DEFAULT_RATE

    def __len__(self) -> int:
        return len(self.vertices)

    def relative_pose(self, from_id: int, to_id: int) -> Transform:
        """Pose of vertex `to_id` expressed in frame `from_id`, via edges only."""
        t = Transform.identity()
        if to_id >= from_id:
            for i in range(from_id, to_id):
                t = t @ self.edges[i].relative
        else:
            for i in range(from_id - 1, to_id - 1, -1):
                t = t @ self.edges[i].relative.inverse()
        return t

    def zero_world_poses(self) -> "PoseGraph":
        """Replace every world pose with a sentinel (used to prove nothing reads them)."""
        vertices = [Vertex(v.id, Transform.identity(), v.submap) for v in self.vertices]
        return PoseGraph(vertices, list(self.edges), self.rate)


def record_teach(pose_stream, rate: float = DEFAULT_RATE) -> TeachPath:
    """Resample a timed pose stream to a fixed-rate relative-step path.

    Interpolation is geodesic (log/exp linear) between bracketing samples.

    Raises:
        EmptyStream: no samples.
        NonMonotonicTime: timestamps not strictly increasing.
    """
    stream = list(pose_stream)
    if not stream:
        raise EmptyStream("pose stream is empty")
    times = np.array([float(t) for t, _ in stream])
    if np.any(np.diff(times) <= 0):
        raise NonMonotonicTime("pose stream times must be strictly increasing")
    poses = [p for _, p in stream]
    if len(stream) == 1:
        return TeachPath(poses[0], (), rate)

    dt = 1.0 / rate
    n_samples = int(math.floor((times[-1] - times[0]) * rate + 1e-9)) + 1
    sampled = []
    j = 0
    for k in range(n_samples):
        tk = times[0] + k * dt
        while j < len(times) - 2 and times[j + 1] <= tk:
            j += 1
        span = times[j + 1] - times[j]
        alpha = (tk - times[j]) / span
        alpha = min(max(alpha, 0.0), 1.0)
        sampled.append(interpolate(poses[j], poses[j + 1], alpha))
    steps = tuple(sampled[i].inverse() @ sampled[i + 1] for i in range(len(sampled) - 1))
    return TeachPath(sampled[0], steps, rate)


def build_pose_graph(path: TeachPath,
                     dist_threshold: float = DEFAULT_DIST_THRESHOLD,
                     angle_threshold: float = DEFAULT_ANGLE_THRESHOLD) -> PoseGraph:
    """Drop a vertex whenever accumulated translation or rotation crosses a threshold.

    The path start is always a vertex, as is the final pose.  Edges hold the
    relative transform between consecutive vertices, compounded from the raw
    steps so the chain exactly reproduces the recorded path.
    """
    poses = path.poses()
    graph = PoseGraph(rate=path.rate)
    graph.vertices.append(Vertex(0, poses[0]))
    last_vertex_idx = 0
    pending = Transform.identity()
    cum_t = 0.0
    cum_r = 0.0
    for i, step in enumerate(path.steps):
        pending = pending @ step
        cum_t += float(np.linalg.norm(step.translation))
        cum_r += step.rotation_angle()
        # Epsilon slack so exact-arithmetic cases (e.g. 100 steps of 0.05 m
        # against a 5 m threshold) trigger despite float accumulation.
        if cum_t >= dist_threshold - 1e-9 or cum_r >= angle_threshold - 1e-12:
            vid = len(graph.vertices)
            graph.vertices.append(Vertex(vid, poses[i + 1]))
            graph.edges.append(Edge(vid - 1, vid, pending))
            pending = Transform.identity()
            cum_t = 0.0
            cum_r = 0.0
            last_vertex_idx = i + 1
    if last_vertex_idx != len(path.steps) and len(path.steps) > 0:
        vid = len(graph.vertices)
        graph.vertices.append(Vertex(vid, poses[-1]))
        graph.edges.append(Edge(vid - 1, vid, pending))
    return graph


def _canonical_sign(normals: np.ndarray) -> np.ndarray:
    """Deterministic sign: largest-magnitude component made positive."""
    idx = np.argmax(np.abs(normals), axis=1)
    lead = normals[np.arange(len(normals)), idx]
    sign = np.where(lead < 0.0, -1.0, 1.0)
    return normals * sign[:, None]


def estimate_normals(cloud: PointCloud, k: int = DEFAULT_NORMAL_K,
                     toward: np.ndarray | None = None) -> PointCloud:
    """Per-point normals from the covariance of the k nearest neighbors.

    The normal is the smallest-eigenvector direction.  Points whose
    neighborhood covariance has rank < 2 (collinear neighborhoods) carry no
    plane information and are dropped from the returned cloud.

    Args:
        cloud: at least k+1 points.
        k: neighbor count (the point itself is excluded).
        toward: optional viewpoint; normals are flipped to face it.

    Raises:
        DegenerateNeighborhood: every neighborhood was rank-deficient.
    """
    pts = cloud.points
    if len(pts) < k + 1:
        raise DegenerateNeighborhood(f"need >= {k + 1} points, have {len(pts)}")
    tree = cKDTree(pts)
    normals = np.zeros_like(pts)
    ok = np.zeros(len(pts), dtype=bool)
    chunk = 65536
    for lo in range(0, len(pts), chunk):
        hi = min(lo + chunk, len(pts))
        _, idx = tree.query(pts[lo:hi], k=k + 1)
        neigh = pts[idx[:, 1:]]  # exclude the query point itself
        centered = neigh - neigh.mean(axis=1, keepdims=True)
        cov = np.einsum("nki,nkj->nij", centered, centered) / k
        evals, evecs = np.linalg.eigh(cov)
        # eigh sorts ascending: normal is the first column.
        normals[lo:hi] = evecs[:, :, 0]
        scale = np.maximum(evals[:, 2], 1e-300)
        ok[lo:hi] = evals[:, 1] > 1e-10 * scale
    if not np.any(ok):
        raise DegenerateNeighborhood("all neighborhoods are rank-deficient")
    pts = pts[ok]
    normals = normals[ok]
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / norms
    if toward is not None:
        to_view = np.asarray(toward, dtype=float).reshape(3) - pts
        flip = np.einsum("ij,ij->i", normals, to_view) < 0.0
        normals[flip] *= -1.0
    else:
        normals = _canonical_sign(normals)
    return PointCloud(pts, normals)


def extract_submaps(map_cloud: PointCloud, graph: PoseGraph,
                    radius: float = DEFAULT_SUBMAP_RADIUS,
                    height: float = DEFAULT_SUBMAP_HEIGHT,
                    normal_k: int = DEFAULT_NORMAL_K,
                    point_cap: int = SUBMAP_POINT_CAP,
                    seed: int = 0) -> PoseGraph:
    """Attach a cylindrical submap to every vertex.

    Normals are estimated once on the full map cloud (before cropping, which
    avoids edge artifacts at cylinder boundaries), then each crop is
    re-expressed in its vertex frame with normals flipped sensor-facing.

    Raises:
        EmptySubmap: a cylinder captured fewer than 50 points; the
            environment is too sparse to localize there.
    """
    if map_cloud.normals is None:
        map_cloud = estimate_normals(map_cloud, k=normal_k)
    pts = map_cloud.points
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B2A]))
    for vertex in graph.vertices:
        inv = vertex.world_pose.inverse()
        local = inv.apply(pts)
        mask = (local[:, 0] ** 2 + local[:, 1] ** 2 <= radius * radius) \
            & (np.abs(local[:, 2]) <= height / 2.0)
        count = int(np.count_nonzero(mask))
        if count < MIN_SUBMAP_POINTS:
            raise EmptySubmap(vertex.id, count)
        idx = np.nonzero(mask)[0]
        if count > point_cap:
            idx = np.sort(rng.choice(idx, size=point_cap, replace=False))
        local_pts = local[idx]
        local_nrm = map_cloud.normals[idx] @ inv.rotation.T
        to_view = _SENSOR_REF - local_pts
        flip = np.einsum("ij,ij->i", local_nrm, to_view) < 0.0
        local_nrm = local_nrm.copy()
        local_nrm[flip] *= -1.0
        vertex.submap = Submap(vertex.id, PointCloud(local_pts, local_nrm), radius, height)
    return graph


def _fmt_pose(t: Transform) -> str:
    return " ".join("%.17g" % v for v in t.matrix34().ravel())


def _parse_pose(tokens: list[str]) -> Transform:
    return Transform.from_matrix34(np.array([float(v) for v in tokens], dtype=float))


def save_teach_path(path: TeachPath, file: str | Path) -> None:
    lines = [f"trsim-teach-path 1", "rate %.17g" % path.rate,
             "start " + _fmt_pose(path.start_pose), f"steps {len(path.steps)}"]
    lines += [_fmt_pose(s) for s in path.steps]
    Path(file).write_text("\n".join(lines) + "\n")


def load_teach_path(file: str | Path) -> TeachPath:
    lines = Path(file).read_text().splitlines()
    if not lines or not lines[0].startswith("trsim-teach-path"):
        raise ValueError(f"{file}: not a teach path file")
    rate = float(lines[1].split()[1])
    start = _parse_pose(lines[2].split()[1:])
    n = int(lines[3].split()[1])
    steps = tuple(_parse_pose(lines[4 + i].split()) for i in range(n))
    return TeachPath(start, steps, rate)


def save_graph(graph: PoseGraph, directory: str | Path) -> None:
    """Serialize as a versioned directory: topology text + one PLY per submap."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = ["trsim-graph 1", "rate %.17g" % graph.rate, f"vertices {len(graph.vertices)}"]
    for v in graph.vertices:
        lines.append(f"v {v.id} " + _fmt_pose(v.world_pose))
    lines.append(f"edges {len(graph.edges)}")
    for e in graph.edges:
        lines.append(f"e {e.from_id} {e.to_id} " + _fmt_pose(e.relative))
    submaps = [v for v in graph.vertices if v.submap is not None]
    lines.append(f"submaps {len(submaps)}")
    for v in submaps:
        sm = v.submap
        name = f"submap_{v.id:05d}.ply"
        lines.append("s %d %.17g %.17g %s" % (v.id, sm.radius, sm.height, name))
        save_ply(sm.cloud, directory / name)
    (directory / "graph.txt").write_text("\n".join(lines) + "\n")


def load_graph(directory: str | Path) -> PoseGraph:
    directory = Path(directory)
    lines = (directory / "graph.txt").read_text().splitlines()
    if not lines or not lines[0].startswith("trsim-graph"):
        raise ValueError(f"{directory}: not a graph directory")
    rate = float(lines[1].split()[1])
    i = 2
    n_vertices = int(lines[i].split()[1])
    i += 1
    graph = PoseGraph(rate=rate)
    for _ in range(n_vertices):
        tok = lines[i].split()
        graph.vertices.append(Vertex(int(tok[1]), _parse_pose(tok[2:])))
        i += 1
    n_edges = int(lines[i].split()[1])
    i += 1
    for _ in range(n_edges):
        tok = lines[i].split()
        graph.edges.append(Edge(int(tok[1]), int(tok[2]), _parse_pose(tok[3:])))
        i += 1
    n_submaps = int(lines[i].split()[1])
    i += 1
    for _ in range(n_submaps):
        tok = lines[i].split()
        vid, radius, height, name = int(tok[1]), float(tok[2]), float(tok[3]), tok[4]
        cloud = load_ply(directory / name)
        graph.vertices[vid].submap = Submap(vid, cloud, radius, height)
        i += 1
    return graph
