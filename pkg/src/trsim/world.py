"""Synthetic environment: terrain heightfield, obstacle primitives, markers.

A world is built deterministically from a (config, seed) pair.  The config is
a versioned nested mapping (YAML on disk); presets provide ready-made
structured environments.

Obstacles are packed into flat arrays for the ray-casting kernels:
boxes as [cx, cy, cz, hx, hy, hz, cos_yaw, sin_yaw] rows (half-sizes),
cylinders as [cx, cy, radius, z_bottom, z_top] rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import InvalidConfig, PathTooShort
from .se3 import Transform

CONFIG_VERSION = 1


@dataclass(frozen=True)
class Marker:
    """Ground fiducial: a paint mark at a known spot."""

    position: np.ndarray
    id: int

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))


@dataclass(frozen=True)
class World:
    """Immutable simulation environment."""

    heights: np.ndarray
    x0: float
    y0: float
    cell: float
    boxes: np.ndarray
    cylinders: np.ndarray
    markers: tuple[Marker, ...]
    config: dict
    seed: int

    def __post_init__(self):
        self.heights.setflags(write=False)
        self.boxes.setflags(write=False)
        self.cylinders.setflags(write=False)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        ny, nx = self.heights.shape
        return (self.x0, self.x0 + (nx - 1) * self.cell,
                self.y0, self.y0 + (ny - 1) * self.cell)

    @property
    def obstacle_count(self) -> int:
        return len(self.boxes) + len(self.cylinders)

    def contains(self, x: float, y: float) -> bool:
        xmin, xmax, ymin, ymax = self.extent
        return xmin <= x <= xmax and ymin <= y <= ymax

    def ground_height(self, x, y):
        """Bilinear terrain height; accepts scalars or arrays."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ny, nx = self.heights.shape
        gx = np.clip((x - self.x0) / self.cell, 0.0, nx - 1)
        gy = np.clip((y - self.y0) / self.cell, 0.0, ny - 1)
        ix = np.minimum(np.floor(gx).astype(np.int64), nx - 2)
        iy = np.minimum(np.floor(gy).astype(np.int64), ny - 2)
        u = gx - ix
        v = gy - iy
        h = (self.heights[iy, ix] * (1 - u) * (1 - v)
             + self.heights[iy, ix + 1] * u * (1 - v)
             + self.heights[iy + 1, ix] * (1 - u) * v
             + self.heights[iy + 1, ix + 1] * u * v)
        return float(h) if h.ndim == 0 else h

    def with_markers(self, markers: list[Marker]) -> "World":
        return World(self.heights, self.x0, self.y0, self.cell,
                     self.boxes, self.cylinders, tuple(markers), self.config, self.seed)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise InvalidConfig(msg)


def _wall_ring_boxes(ring, height: float, thickness: float, ground_z) -> list[list[float]]:
    """Four boxes forming a rectangular wall ring."""
    xmin, xmax, ymin, ymax = ring
    t2 = thickness / 2.0
    cx, cy = (xmin + xmax) / 2.0, (ymin + ymax) / 2.0
    segs = [
        (cx, ymin, (xmax - xmin) / 2.0 + t2, t2),
        (cx, ymax, (xmax - xmin) / 2.0 + t2, t2),
        (xmin, cy, t2, (ymax - ymin) / 2.0 + t2),
        (xmax, cy, t2, (ymax - ymin) / 2.0 + t2),
    ]
    out = []
    for sx, sy, hx, hy in segs:
        z = ground_z(sx, sy)
        out.append([sx, sy, z + height / 2.0, hx, hy, height / 2.0, 1.0, 0.0])
    return out


def _wall_polyline_boxes(pts, height: float, thickness: float, ground_z) -> list[list[float]]:
    """One box per polyline segment; yaw follows the segment."""
    out = []
    for (x1, y1), (x2, y2) in zip(pts[:-1], pts[1:]):
        dx, dy = x2 - x1, y2 - y1
        length = math.hypot(dx, dy)
        if length < 1e-9:
            continue
        yaw = math.atan2(dy, dx)
        cx, cy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
        z = ground_z(cx, cy)
        out.append([cx, cy, z + height / 2.0, length / 2.0 + thickness / 2.0,
                    thickness / 2.0, height / 2.0, math.cos(yaw), math.sin(yaw)])
    return out


def _dist_to_polyline(px: float, py: float, pts: np.ndarray) -> float:
    best = math.inf
    for (x1, y1), (x2, y2) in zip(pts[:-1], pts[1:]):
        vx, vy = x2 - x1, y2 - y1
        L2 = vx * vx + vy * vy
        if L2 == 0.0:
            d = math.hypot(px - x1, py - y1)
        else:
            s = max(0.0, min(1.0, ((px - x1) * vx + (py - y1) * vy) / L2))
            d = math.hypot(px - (x1 + s * vx), py - (y1 + s * vy))
        best = min(best, d)
    return best


def generate_world(config: dict, seed: int) -> World:
    """Build a world deterministically from a config mapping and a seed.

    Raises:
        InvalidConfig: missing/inconsistent fields.
    """
    _require(isinstance(config, dict), "config must be a mapping")
    _require(config.get("version") == CONFIG_VERSION,
             f"config version must be {CONFIG_VERSION}")
    extent = config.get("extent")
    _require(isinstance(extent, (list, tuple)) and len(extent) == 4,
             "extent must be [xmin, xmax, ymin, ymax]")
    xmin, xmax, ymin, ymax = map(float, extent)
    _require(xmax > xmin and ymax > ymin, "extent must be non-degenerate")
    cell = float(config.get("cell_size", 1.0))
    _require(cell > 0, "cell_size must be positive")

    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))

    nx = int(math.ceil((xmax - xmin) / cell)) + 1
    ny = int(math.ceil((ymax - ymin) / cell)) + 1
    xs = xmin + np.arange(nx) * cell
    ys = ymin + np.arange(ny) * cell
    X, Y = np.meshgrid(xs, ys)

    terrain = config.get("terrain") or {}
    amp = float(terrain.get("amplitude", 0.0))
    wav = float(terrain.get("wavelength", 40.0))
    _require(amp >= 0, "terrain amplitude must be >= 0")
    if amp > 0:
        _require(wav >= 8.0 * cell, "terrain wavelength must be >= 8 * cell_size")
        heights = np.zeros_like(X)
        for _ in range(3):
            ang = rng.uniform(0.0, 2.0 * math.pi)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            k = 2.0 * math.pi / wav
            heights += np.sin(k * (X * math.cos(ang) + Y * math.sin(ang)) + phase)
        heights *= amp / 3.0
    else:
        heights = np.zeros_like(X)

    def ground_z(x, y):
        gx = np.clip((x - xmin) / cell, 0, nx - 1)
        gy = np.clip((y - ymin) / cell, 0, ny - 1)
        ix = min(int(gx), nx - 2)
        iy = min(int(gy), ny - 2)
        u, v = gx - ix, gy - iy
        return (heights[iy, ix] * (1 - u) * (1 - v) + heights[iy, ix + 1] * u * (1 - v)
                + heights[iy + 1, ix] * (1 - u) * v + heights[iy + 1, ix + 1] * u * v)

    boxes: list[list[float]] = []
    cylinders: list[list[float]] = []

    for wall in config.get("walls") or []:
        height = float(wall.get("height", 2.5))
        thickness = float(wall.get("thickness", 0.4))
        _require(height > 0 and thickness > 0, "wall height/thickness must be positive")
        if "ring" in wall:
            boxes += _wall_ring_boxes([float(v) for v in wall["ring"]], height, thickness, ground_z)
        elif "polyline" in wall:
            pts = [(float(p[0]), float(p[1])) for p in wall["polyline"]]
            _require(len(pts) >= 2, "wall polyline needs >= 2 points")
            boxes += _wall_polyline_boxes(pts, height, thickness, ground_z)
        else:
            raise InvalidConfig("wall entry needs 'ring' or 'polyline'")

    for b in config.get("explicit_boxes") or []:
        cx, cy, sx, sy, sz, yaw = map(float, b)
        z = ground_z(cx, cy)
        boxes.append([cx, cy, z + sz / 2.0, sx / 2.0, sy / 2.0, sz / 2.0,
                      math.cos(yaw), math.sin(yaw)])

    for c in config.get("explicit_cylinders") or []:
        cx, cy, r, h = map(float, c)
        z = ground_z(cx, cy)
        cylinders.append([cx, cy, r, z, z + h])

    def scatter(spec: dict, place_one) -> None:
        count = int(spec.get("count", 0))
        region = spec.get("region", extent)
        rxmin, rxmax, rymin, rymax = map(float, region)
        keepout = spec.get("keepout")
        keepout_pts = np.asarray(keepout, dtype=float) if keepout else None
        clearance = float(spec.get("keepout_clearance", 3.0))
        placed = 0
        attempts = 0
        while placed < count and attempts < 1000 * max(count, 1):
            attempts += 1
            px = rng.uniform(rxmin, rxmax)
            py = rng.uniform(rymin, rymax)
            if keepout_pts is not None and _dist_to_polyline(px, py, keepout_pts) < clearance:
                continue
            place_one(px, py)
            placed += 1
        _require(placed == count,
                 f"could not place {count} obstacles (placed {placed}); "
                 "region too constrained")

    box_spec = config.get("boxes")
    if box_spec:
        smin = np.asarray(box_spec.get("size_min", [3.5, 1.6, 1.2]), dtype=float)
        smax = np.asarray(box_spec.get("size_max", [5.0, 2.2, 1.8]), dtype=float)

        def one_box(px, py):
            size = rng.uniform(smin, smax)
            yaw = rng.uniform(0.0, 2.0 * math.pi)
            z = ground_z(px, py)
            boxes.append([px, py, z + size[2] / 2.0, size[0] / 2.0, size[1] / 2.0,
                          size[2] / 2.0, math.cos(yaw), math.sin(yaw)])

        scatter(box_spec, one_box)

    cyl_spec = config.get("cylinders")
    if cyl_spec:
        rmin, rmax = map(float, cyl_spec.get("radius_range", [0.15, 0.45]))
        hmin, hmax = map(float, cyl_spec.get("height_range", [2.0, 4.0]))

        def one_cyl(px, py):
            r = rng.uniform(rmin, rmax)
            h = rng.uniform(hmin, hmax)
            z = ground_z(px, py)
            cylinders.append([px, py, r, z, z + h])

        scatter(cyl_spec, one_cyl)

    boxes_arr = np.asarray(boxes, dtype=float).reshape(-1, 8)
    cyl_arr = np.asarray(cylinders, dtype=float).reshape(-1, 5)
    if not np.all(np.isfinite(heights)):
        raise InvalidConfig("terrain produced non-finite heights")
    return World(heights, xmin, ymin, cell, boxes_arr, cyl_arr, (), dict(config), int(seed))


def path_arc_length(poses: list[Transform]) -> np.ndarray:
    """Cumulative arc length over pose positions, starting at 0."""
    pts = np.array([p.translation for p in poses])
    if len(pts) < 2:
        return np.zeros(len(pts))
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def pose_at_station(poses: list[Transform], arc: np.ndarray, s: float) -> Transform:
    """Pose at arc-length station s, interpolating between samples."""
    from .se3 import interpolate

    s = min(max(s, 0.0), float(arc[-1]))
    i = int(np.searchsorted(arc, s, side="right")) - 1
    i = min(max(i, 0), len(poses) - 2)
    span = arc[i + 1] - arc[i]
    alpha = 0.0 if span <= 1e-12 else (s - arc[i]) / span
    return interpolate(poses[i], poses[i + 1], float(alpha))


def marker_stations(path_length: float, spacing: float) -> list[float]:
    """Marker stations at (k + 1/2) * spacing, staying clear of endpoints."""
    if spacing <= 0:
        raise InvalidConfig("marker spacing must be positive")
    stations = []
    s = spacing / 2.0
    while s < path_length:
        stations.append(s)
        s += spacing
    return stations


def place_markers(world: World, teach_poses: list[Transform], spacing: float,
                  lateral_offset: float) -> World:
    """Place ground markers alongside a taught path.

    Markers sit every `spacing` meters of arc length at the signed lateral
    offset in the vehicle frame (positive left), projected vertically onto
    the ground.  Endpoints are excluded: stations start at spacing/2.

    Raises:
        PathTooShort: path shorter than one spacing interval.
    """
    arc = path_arc_length(teach_poses)
    length = float(arc[-1]) if len(arc) else 0.0
    if length < spacing:
        raise PathTooShort(f"path {length:.2f} m shorter than marker spacing {spacing:.2f} m")
    markers = []
    for mid, s in enumerate(marker_stations(length, spacing)):
        pose = pose_at_station(teach_poses, arc, s)
        p = pose.apply(np.array([0.0, lateral_offset, 0.0]))
        p[2] = world.ground_height(p[0], p[1])
        markers.append(Marker(p, mid))
    return world.with_markers(markers)


def load_world_config(path: str | Path) -> dict:
    """Load and minimally validate a world config document."""
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    _require(isinstance(doc, dict), f"{path}: config must be a mapping")
    return doc


def save_world_config(config: dict, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config, sort_keys=True))
