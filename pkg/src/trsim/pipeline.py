"""Batch pipeline: run configs, scripted routes, teach/repeat flows, artifacts.

A run config is one versioned YAML document holding the world preset, route
script, noise models, graph thresholds, ICP and controller parameters, and
marker spec.  Every artifact directory echoes the exact config it was
produced from, so outputs are reproducible bit-for-bit from the echo.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import presets
from .cloud import PointCloud
from .errors import InvalidConfig
from .mapnoise import MapNoiseModel, warp_point
from .repeat import (ControllerConfig, IcpParams, MarkerAnchor, RepeatLog,
                     VehicleState, run_repeat, tire_lateral_offset)
from .se3 import Transform
from .sensor import LidarModel
from .teachmap import (PoseGraph, TeachPath, build_pose_graph, extract_submaps,
                       load_graph, load_teach_path, record_teach, save_graph,
                       save_teach_path)
from .world import (World, generate_world, marker_stations, path_arc_length,
                    place_markers, pose_at_station)

RUN_CONFIG_VERSION = 1

# Reference benchmark configurations: a ~300 m structured loop repeated with
# either a clean map or a reconstruction-noise map (2 cm jitter plus a
# 0.3 m / 50 m drift warp).  Used by the acceptance suite and exposed through
# the CLI as ready-made run configs.
ANALOG_ROUTES = ("yard_loop", "dome_loop")


def analog_config(route: str, noisy: bool, seed: int,
                  drift_wavelength: float = 50.0) -> dict:
    if route not in ANALOG_ROUTES:
        raise InvalidConfig(f"analog route must be one of {ANALOG_ROUTES}")
    amp = 0.3 if noisy else 0.0
    sigma = 0.02 if noisy else 0.0
    return {
        "version": RUN_CONFIG_VERSION,
        "seed": int(seed),
        "world": {"preset": route},
        "route": {"preset": route, "speed": 2.0},
        "map_noise": {
            "point_sigma": sigma,
            "density": 16.0,
            "drift_amplitude": [amp, amp, amp],
            "drift_wavelength": [drift_wavelength] * 3,
            "drift_seed": 7,
        },
        "lidar": {
            "beams": 24,
            "horizontal_steps": 192,
            "vertical_fov_deg": [-22.5, 22.5],
            "max_range": 20.0,
            "range_noise_sigma": 0.02,
            "dropout_prob": 0.0,
        },
        "graph": {"dist_threshold": 2.5, "angle_threshold_deg": 10.0,
                  "submap_radius": 25.0, "submap_height": 10.0, "normal_k": 12},
        "icp": {"max_iterations": 30, "correspondence_max_dist": 0.7,
                "trans_eps": 1e-4, "rot_eps": 1e-4, "trim_fraction": 0.3},
        "controller": {"lookahead": 1.5, "v_max": 2.0, "omega_max": 1.5,
                       "k_curv": 2.0, "min_speed_frac": 0.2},
        "repeat": {"control_rate": 10.0, "sensor_height": 0.8,
                   "scan_crop": 4.8, "icp_max_points": 1000},
        "markers": {"enabled": True, "spacing": 25.0, "lateral_offset": -0.9,
                    "noise_sigma": 0.02},
        "vehicle": {"wheel_track": 1.2, "tire_width": 0.24},
        "teach_rate": 20.0,
    }

DEFAULT_RUN_CONFIG: dict = {
    "version": RUN_CONFIG_VERSION,
    "seed": 0,
    "world": {"preset": "yard_loop"},
    "route": {"preset": "yard_loop"},
    "map_noise": {
        "point_sigma": 0.0,
        "density": 20.0,
        "drift_amplitude": [0.0, 0.0, 0.0],
        "drift_wavelength": [50.0, 50.0, 50.0],
        "drift_seed": 0,
    },
    "lidar": {
        "beams": 128,
        "horizontal_steps": 1024,
        "vertical_fov_deg": [-22.5, 22.5],
        "max_range": 90.0,
        "range_noise_sigma": 0.02,
        "dropout_prob": 0.0,
    },
    "graph": {
        "dist_threshold": 5.0,
        "angle_threshold_deg": 20.0,
        "submap_radius": 25.0,
        "submap_height": 10.0,
        "normal_k": 16,
    },
    "icp": {
        "max_iterations": 30,
        "correspondence_max_dist": 1.0,
        "trans_eps": 1e-4,
        "rot_eps": 1e-4,
        "trim_fraction": 0.1,
    },
    "controller": {
        "lookahead": 2.0,
        "v_max": 1.0,
        "omega_max": 1.5,
        "k_curv": 1.5,
        "min_speed_frac": 0.2,
    },
    "repeat": {
        "control_rate": 10.0,
        "sensor_height": 0.8,
        "scan_crop": 8.0,
        "icp_max_points": 1200,
    },
    "markers": {
        "enabled": True,
        "spacing": 25.0,
        "lateral_offset": -0.9,
        "noise_sigma": 0.02,
    },
    "vehicle": {"wheel_track": 1.2, "tire_width": 0.24},
    "teach_rate": 20.0,
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _resolve_section(user: dict | None, section: str, resolver) -> dict:
    default_preset = DEFAULT_RUN_CONFIG[section]["preset"]
    if not user:
        return resolver(default_preset)
    if "preset" in user:
        base = resolver(user["preset"])
        rest = {k: v for k, v in user.items() if k != "preset"}
        return _deep_merge(base, rest)
    return dict(user)


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    seed: int
    world_config: dict
    route: dict
    map_noise: MapNoiseModel
    lidar: LidarModel
    graph: dict
    icp: IcpParams
    controller: ControllerConfig
    repeat: dict
    markers: dict
    vehicle: dict
    teach_rate: float

    @staticmethod
    def from_dict(doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise InvalidConfig("run config must be a mapping")
        merged = _deep_merge(DEFAULT_RUN_CONFIG, doc)
        if merged.get("version") != RUN_CONFIG_VERSION:
            raise InvalidConfig(f"run config version must be {RUN_CONFIG_VERSION}")
        # An inline world/route replaces the default preset; a preset section
        # resolves first and then takes the remaining keys as overrides.  The
        # resolved form is echoed so artifacts stay self-contained.
        world_config = _resolve_section(doc.get("world"), "world",
                                        presets.world_preset)
        route = _resolve_section(doc.get("route"), "route", presets.route_preset)
        merged["world"] = world_config
        merged["route"] = route
        mn = merged["map_noise"]
        map_noise = MapNoiseModel(
            point_sigma=float(mn["point_sigma"]),
            density=float(mn["density"]),
            drift_amplitude=tuple(np.broadcast_to(mn["drift_amplitude"], 3).astype(float)),
            drift_wavelength=tuple(np.broadcast_to(mn["drift_wavelength"], 3).astype(float)),
            drift_seed=int(mn["drift_seed"]),
        )
        ld = merged["lidar"]
        lidar = LidarModel(
            beams=int(ld["beams"]),
            horizontal_resolution=2.0 * math.pi / int(ld["horizontal_steps"]),
            vertical_fov=(math.radians(float(ld["vertical_fov_deg"][0])),
                          math.radians(float(ld["vertical_fov_deg"][1]))),
            max_range=float(ld["max_range"]),
            range_noise_sigma=float(ld["range_noise_sigma"]),
            dropout_prob=float(ld["dropout_prob"]),
        )
        ic = merged["icp"]
        icp = IcpParams(
            max_iterations=int(ic["max_iterations"]),
            correspondence_max_dist=float(ic["correspondence_max_dist"]),
            convergence_trans_eps=float(ic["trans_eps"]),
            convergence_rot_eps=float(ic["rot_eps"]),
            outlier_trim_fraction=float(ic["trim_fraction"]),
        )
        ct = merged["controller"]
        controller = ControllerConfig(
            lookahead=float(ct["lookahead"]),
            v_max=float(ct["v_max"]),
            omega_max=float(ct["omega_max"]),
            k_curv=float(ct["k_curv"]),
            min_speed_frac=float(ct["min_speed_frac"]),
        )
        gp = dict(merged["graph"])
        gp["angle_threshold"] = math.radians(float(gp.pop("angle_threshold_deg")))
        return RunConfig(
            raw=merged, seed=int(merged["seed"]), world_config=world_config,
            route=route, map_noise=map_noise, lidar=lidar, graph=gp, icp=icp,
            controller=controller, repeat=dict(merged["repeat"]),
            markers=dict(merged["markers"]), vehicle=dict(merged["vehicle"]),
            teach_rate=float(merged["teach_rate"]),
        )

    @staticmethod
    def load(path: str | Path) -> "RunConfig":
        try:
            doc = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc
        return RunConfig.from_dict(doc or {})


# --- scripted routes ---------------------------------------------------------

def _fillet_segments(waypoints: list, radius: float, closed: bool) -> list:
    """Polyline with circular fillets; segments are ('line', p0, p1) or
    ('arc', center, r, a0, da)."""
    pts = [np.asarray(p, dtype=float) for p in waypoints]
    if len(pts) < 2:
        raise InvalidConfig("route needs at least 2 waypoints")
    if closed:
        # Start on the midpoint of the closing edge so the path begins on a
        # straight section.
        start = 0.5 * (pts[-1] + pts[0])
        corner_pts = pts
    else:
        start = pts[0]
        corner_pts = pts[1:-1]

    segments = []
    cursor = start

    def corner(prev_pt, pt, next_pt):
        nonlocal cursor
        u1 = pt - prev_pt
        u2 = next_pt - pt
        l1, l2 = np.linalg.norm(u1), np.linalg.norm(u2)
        if l1 < 1e-9 or l2 < 1e-9:
            return
        u1, u2 = u1 / l1, u2 / l2
        cross = u1[0] * u2[1] - u1[1] * u2[0]
        dot = float(np.dot(u1, u2))
        theta = math.atan2(cross, dot)
        if radius <= 0.0 or abs(theta) < 1e-9:
            segments.append(("line", cursor.copy(), pt.copy()))
            cursor = pt.copy()
            return
        d = radius * math.tan(abs(theta) / 2.0)
        if d > l1 - 1e-9 or d > l2 - 1e-9:
            raise InvalidConfig("corner radius too large for waypoint spacing")
        t1 = pt - u1 * d
        t2 = pt + u2 * d
        n1 = np.array([-u1[1], u1[0]]) * (1.0 if theta > 0 else -1.0)
        center = t1 + n1 * radius
        a0 = math.atan2(t1[1] - center[1], t1[0] - center[0])
        if np.linalg.norm(t1 - cursor) > 1e-9:
            segments.append(("line", cursor.copy(), t1))
        segments.append(("arc", center, radius, a0, theta))
        cursor = t2

    if closed:
        n = len(pts)
        for i in range(n):
            prev_pt = pts[i - 1] if i > 0 else pts[-1]
            nxt = pts[(i + 1) % n]
            corner(prev_pt, pts[i], nxt)
        if np.linalg.norm(start - cursor) > 1e-9:
            segments.append(("line", cursor.copy(), start.copy()))
    else:
        for i, pt in enumerate(corner_pts, start=1):
            corner(pts[i - 1], pt, pts[i + 1])
        if np.linalg.norm(pts[-1] - cursor) > 1e-9:
            segments.append(("line", cursor.copy(), pts[-1].copy()))
    return segments


def _segment_length(seg) -> float:
    if seg[0] == "line":
        return float(np.linalg.norm(seg[2] - seg[1]))
    _, _, r, _, da = seg
    return abs(da) * r


def _segment_pose(seg, s: float) -> tuple[float, float, float]:
    if seg[0] == "line":
        _, p0, p1 = seg
        length = float(np.linalg.norm(p1 - p0))
        u = (p1 - p0) / max(length, 1e-12)
        p = p0 + u * s
        return float(p[0]), float(p[1]), math.atan2(u[1], u[0])
    _, center, r, a0, da = seg
    sign = 1.0 if da > 0 else -1.0
    a = a0 + sign * s / r
    x = center[0] + r * math.cos(a)
    y = center[1] + r * math.sin(a)
    heading = a + sign * math.pi / 2.0
    return float(x), float(y), heading


class RoutePath:
    """Arc-length-parameterized planar route."""

    def __init__(self, segments: list):
        self.segments = segments
        self.lengths = [_segment_length(s) for s in segments]
        self.cum = np.concatenate([[0.0], np.cumsum(self.lengths)])
        self.total = float(self.cum[-1])

    def pose2d(self, s: float) -> tuple[float, float, float]:
        s = min(max(s, 0.0), self.total)
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return _segment_pose(self.segments[i], s - self.cum[i])


def build_route(route: dict) -> RoutePath:
    """Geometric path from a route spec (waypoints+fillets or a circle)."""
    if "circle" in route:
        c = route["circle"]
        center = np.asarray(c["center"], dtype=float)
        r = float(c["radius"])
        a0 = math.radians(float(c.get("start_angle_deg", 0.0)))
        return RoutePath([("arc", center, r, a0, 2.0 * math.pi)])
    if "waypoints" in route:
        return RoutePath(_fillet_segments(route["waypoints"],
                                          float(route.get("corner_radius", 0.0)),
                                          bool(route.get("closed", False))))
    raise InvalidConfig("route spec needs 'waypoints', 'circle', or 'twists'")


def route_pose_stream(route: dict, world: World | None, rate: float = 20.0):
    """Timed world-frame poses along a route at the teach rate."""
    if "twists" in route:
        from .repeat import step_vehicle
        from .se3 import Twist
        start = route.get("start", [0.0, 0.0, 0.0])
        x, y, yaw = float(start[0]), float(start[1]), math.radians(float(start[2]))
        z = world.ground_height(x, y) if world is not None else 0.0
        state = VehicleState(Transform.from_xyyaw(x, y, yaw, z))
        dt = 1.0 / rate
        stream = [(0.0, state.pose)]
        tick = 0
        for dur, v, w in route["twists"]:
            n = int(round(float(dur) * rate))
            for _ in range(n):
                state = step_vehicle(state, Twist.planar(float(v), float(w)), dt,
                                     v_max=math.inf, omega_max=math.inf)
                tick += 1
                pose = state.pose
                if world is not None:
                    px, py = pose.translation[0], pose.translation[1]
                    pose = Transform.from_xyyaw(px, py, pose.yaw,
                                                world.ground_height(px, py))
                    state.pose = pose
                stream.append((tick * dt, pose))
        return stream
    path = build_route(route)
    speed = float(route.get("speed", 1.0))
    if speed <= 0:
        raise InvalidConfig("route speed must be positive")
    duration = path.total / speed
    n = int(math.floor(duration * rate + 1e-9)) + 1
    stream = []
    for k in range(n):
        t = k / rate
        x, y, heading = path.pose2d(speed * t)
        z = world.ground_height(x, y) if world is not None else 0.0
        stream.append((t, Transform.from_xyyaw(x, y, heading, z)))
    return stream


# --- teach flow --------------------------------------------------------------

@dataclass
class MarkerRecord:
    marker_id: int
    world_position: list[float]
    warped_position: list[float]
    station: float
    anchor_vertex: int
    anchor_x: float
    taught_offset: float


@dataclass
class TeachArtifacts:
    config: RunConfig
    world: World
    map_cloud: PointCloud
    teach_path: TeachPath
    graph: PoseGraph
    start_pose_w: Transform
    stream_w: list
    marker_records: list[MarkerRecord] = field(default_factory=list)


def run_teach(cfg: RunConfig) -> TeachArtifacts:
    """Full teach: world, scripted route drive, then the map build."""
    world = generate_world(cfg.world_config, cfg.seed)
    stream_w = route_pose_stream(cfg.route, world, cfg.teach_rate)
    return teach_from_stream(cfg, world, stream_w)


def teach_from_stream(cfg: RunConfig, world: World,
                      stream_w: list) -> TeachArtifacts:
    """Map build from a driven pose stream: markers, map sampling, graph, submaps.

    Shared by the scripted teach and the interactive piloting service.
    """
    from .mapnoise import sample_map_cloud

    poses_w = [p for _, p in stream_w]

    marker_records: list[MarkerRecord] = []
    arc_w = path_arc_length(poses_w)
    markers_on = cfg.markers["enabled"] and float(arc_w[-1]) >= float(cfg.markers["spacing"])
    if markers_on:
        world = place_markers(world, poses_w, float(cfg.markers["spacing"]),
                              float(cfg.markers["lateral_offset"]))

    map_cloud = sample_map_cloud(world, cfg.map_noise, cfg.seed)

    bounds = world.extent
    warped_stream = [
        (t, Transform(p.rotation, warp_point(cfg.map_noise, p.translation, bounds)))
        for t, p in stream_w
    ]
    teach_path = record_teach(warped_stream, cfg.teach_rate)
    graph = build_pose_graph(teach_path, float(cfg.graph["dist_threshold"]),
                             float(cfg.graph["angle_threshold"]))
    graph = extract_submaps(map_cloud, graph,
                            radius=float(cfg.graph["submap_radius"]),
                            height=float(cfg.graph["submap_height"]),
                            normal_k=int(cfg.graph["normal_k"]),
                            seed=cfg.seed)

    if markers_on:
        warped_poses = teach_path.poses()
        warped_arc = path_arc_length(warped_poses)
        stations = marker_stations(float(arc_w[-1]), float(cfg.markers["spacing"]))
        wheel_track = float(cfg.vehicle["wheel_track"])
        tire_width = float(cfg.vehicle["tire_width"])
        for marker in world.markers:
            s = stations[marker.id]
            m_m = warp_point(cfg.map_noise, marker.position, bounds)
            taught_pose = pose_at_station(warped_poses, warped_arc, s)
            taught = tire_lateral_offset(taught_pose, m_m, wheel_track, tire_width)
            # Anchor at the euclidean-nearest vertex; min-|x| alone can pick a
            # vertex on the far side of a loop whose axis happens to align.
            dists = [float(np.linalg.norm(v.world_pose.translation
                                          - taught_pose.translation))
                     for v in graph.vertices]
            best_v = int(np.argmin(dists))
            best_x = float(graph.vertices[best_v].world_pose.inverse()
                           .apply(taught_pose.translation)[0])
            marker_records.append(MarkerRecord(
                marker.id, [float(v) for v in marker.position],
                [float(v) for v in m_m], float(s), best_v, float(best_x), float(taught)))

    return TeachArtifacts(cfg, world, map_cloud, teach_path, graph,
                          stream_w[0][1], stream_w, marker_records)


def marker_anchors(artifacts_markers: list[MarkerRecord]) -> list[MarkerAnchor]:
    return [MarkerAnchor(m.marker_id, m.anchor_vertex, m.anchor_x, m.taught_offset)
            for m in artifacts_markers]


def taught_offsets(artifacts_markers: list[MarkerRecord]) -> dict[int, float]:
    return {m.marker_id: m.taught_offset for m in artifacts_markers}


def run_one_repeat(cfg: RunConfig, world: World, graph: PoseGraph,
                   start_pose_w: Transform,
                   records: list[MarkerRecord], seed: int) -> RepeatLog:
    """One autonomous repeat with the configured sensor/ICP/controller."""
    vehicle = VehicleState(start_pose_w,
                           wheel_track=float(cfg.vehicle["wheel_track"]),
                           tire_width=float(cfg.vehicle["tire_width"]))
    scan_crop = cfg.repeat.get("scan_crop")
    return run_repeat(
        world, graph, cfg.lidar, cfg.icp, cfg.controller, start_pose_w, seed,
        control_rate=float(cfg.repeat["control_rate"]),
        sensor_height=float(cfg.repeat["sensor_height"]),
        scan_crop=float(scan_crop) if scan_crop else None,
        icp_max_points=int(cfg.repeat["icp_max_points"]),
        marker_anchors=marker_anchors(records) if cfg.markers["enabled"] else None,
        vehicle=vehicle,
    )


# --- artifact directories ----------------------------------------------------

def write_teach_artifacts(artifacts: TeachArtifacts, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(artifacts.config.raw, sort_keys=True))
    save_graph(artifacts.graph, out / "graph")
    save_teach_path(artifacts.teach_path, out / "teach_path.txt")
    markers_doc = [{
        "marker_id": m.marker_id,
        "world_position": m.world_position,
        "warped_position": m.warped_position,
        "station": m.station,
        "anchor_vertex": m.anchor_vertex,
        "anchor_x": m.anchor_x,
        "taught_offset": m.taught_offset,
    } for m in artifacts.marker_records]
    (out / "markers.json").write_text(json.dumps(markers_doc, indent=2) + "\n")
    meta = {
        "version": 1,
        "seed": artifacts.config.seed,
        "start_pose_w": [float(v) for v in artifacts.start_pose_w.matrix34().ravel()],
        "n_vertices": len(artifacts.graph.vertices),
        "path_length": artifacts.teach_path.length(),
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return out


@dataclass
class LoadedArtifacts:
    config: RunConfig
    world: World
    graph: PoseGraph
    teach_path: TeachPath
    start_pose_w: Transform
    marker_records: list[MarkerRecord]


def load_teach_artifacts(directory: str | Path) -> LoadedArtifacts:
    directory = Path(directory)
    cfg = RunConfig.load(directory / "config.yaml")
    world = generate_world(cfg.world_config, cfg.seed)
    records = []
    markers_file = directory / "markers.json"
    if markers_file.exists():
        for m in json.loads(markers_file.read_text()):
            records.append(MarkerRecord(m["marker_id"], m["world_position"],
                                        m["warped_position"], m["station"],
                                        m["anchor_vertex"], m["anchor_x"],
                                        m["taught_offset"]))
    if cfg.markers["enabled"] and records:
        stream_w = route_pose_stream(cfg.route, world, cfg.teach_rate)
        world = place_markers(world, [p for _, p in stream_w],
                              float(cfg.markers["spacing"]),
                              float(cfg.markers["lateral_offset"]))
    graph = load_graph(directory / "graph")
    teach_path = load_teach_path(directory / "teach_path.txt")
    meta = json.loads((directory / "meta.json").read_text())
    start = Transform.from_matrix34(np.array(meta["start_pose_w"]).reshape(3, 4))
    return LoadedArtifacts(cfg, world, graph, teach_path, start, records)
