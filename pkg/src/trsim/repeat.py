"""Autonomous repeat: ICP localization against submaps plus path tracking.

Every cycle at the control rate: simulate a scan, register it to the active
submap (seeded by the previous estimate propagated through the commanded
motion), hand off between submaps along the chain, steer with pure pursuit,
and integrate the vehicle.  All graph lookups go through edge relatives;
vertex world poses are never read here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .errors import (EndOfPath, InvalidConfig, NonFiniteSolution,
                     TooFewCorrespondences)
from .se3 import Transform, Twist, exp_map
from .sensor import LidarModel, simulate_scan
from .teachmap import PoseGraph, Submap
from .world import World

MIN_CORRESPONDENCES = 20
_COND_LIMIT = 1e8


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 30
    correspondence_max_dist: float = 1.0
    convergence_trans_eps: float = 1e-4
    convergence_rot_eps: float = 1e-4
    outlier_trim_fraction: float = 0.1

    def __post_init__(self):
        if self.max_iterations < 1:
            raise InvalidConfig("max_iterations must be >= 1")
        if self.convergence_trans_eps <= 0 or self.convergence_rot_eps <= 0:
            raise InvalidConfig("convergence eps values must be > 0")
        if not (0.0 <= self.outlier_trim_fraction < 1.0):
            raise InvalidConfig("outlier_trim_fraction must be in [0, 1)")


@dataclass(frozen=True)
class IcpResult:
    """Registration outcome: sensor pose estimate in the submap vertex frame."""

    transform: Transform
    iterations: int
    final_rmse: float
    inlier_fraction: float
    converged: bool
    rmse_history: tuple[float, ...] = ()


@dataclass
class VehicleState:
    """True vehicle state; the pose is simulation ground truth."""

    pose: Transform
    commanded: Twist = field(default_factory=Twist.zero)
    wheel_track: float = 1.2
    tire_width: float = 0.24


@dataclass(frozen=True)
class ControllerConfig:
    lookahead: float = 2.0
    v_max: float = 1.0
    omega_max: float = 1.5
    k_curv: float = 1.5
    min_speed_frac: float = 0.2


@dataclass
class LogEntry:
    time: float
    active_vertex: int
    localized: Transform  # vehicle pose in the active vertex frame
    icp: IcpResult
    command: Twist
    true_pose: Transform


@dataclass
class MarkerEvent:
    marker_id: int
    measured_offset: float  # noiseless geometric offset at the pause
    time: float


@dataclass
class RepeatLog:
    entries: list[LogEntry] = field(default_factory=list)
    marker_events: list[MarkerEvent] = field(default_factory=list)
    completed: bool = False
    failure_reason: str | None = None
    seed: int = 0
    control_rate: float = 10.0


def _solve_point_to_plane(p: np.ndarray, q: np.ndarray, n: np.ndarray) -> np.ndarray:
    """One linearized 6-DOF step [omega, dt] minimizing sum(n.(p - q))^2."""
    r = np.einsum("ij,ij->i", p - q, n)
    J = np.hstack([np.cross(p, n), n])
    s = np.linalg.svd(J, compute_uv=False)
    if not np.all(np.isfinite(s)) or s[0] <= 0 or s[0] / max(s[-1], 1e-300) > _COND_LIMIT:
        raise NonFiniteSolution(f"normal equations condition {s[0] / max(s[-1], 1e-300):.2e}")
    x, *_ = np.linalg.lstsq(J, -r, rcond=None)
    return x


def _step_transform(x: np.ndarray, scale: float = 1.0) -> Transform:
    """Incremental transform from a solved step: rotation exp, translation as-is."""
    omega = Twist(np.zeros(3), x[:3] * scale)
    return Transform(exp_map(omega).rotation, x[3:] * scale)


def icp_point_to_plane(scan: PointCloud, submap: Submap, init: Transform,
                       params: IcpParams, tree: cKDTree | None = None) -> IcpResult:
    """Trimmed point-to-plane ICP of a scan onto a submap.

    The returned transform maps sensor-frame points into the submap vertex
    frame.  A step that would increase the trimmed RMSE is halved and, if it
    still does not help, rejected, so the RMSE over accepted iterations is
    non-increasing.

    Raises:
        TooFewCorrespondences: fewer than 20 pairs survive gating + trimming.
        NonFiniteSolution: degenerate geometry (condition number > 1e8).
    """
    if submap.cloud.normals is None:
        raise InvalidConfig("submap cloud has no normals")
    if len(scan) == 0:
        raise TooFewCorrespondences("scan is empty")
    target = submap.cloud.points
    target_n = submap.cloud.normals
    if tree is None:
        tree = cKDTree(target)
    src = scan.points

    def correspond(T: Transform):
        p = T.apply(src)
        d, j = tree.query(p)
        mask = d <= params.correspondence_max_dist
        count = int(np.count_nonzero(mask))
        if count < MIN_CORRESPONDENCES:
            raise TooFewCorrespondences(
                f"{count} correspondences within {params.correspondence_max_dist} m")
        p = p[mask]
        q = target[j[mask]]
        n = target_n[j[mask]]
        r = np.einsum("ij,ij->i", p - q, n)
        keep = max(MIN_CORRESPONDENCES,
                   int(math.ceil((1.0 - params.outlier_trim_fraction) * count)))
        if keep < count:
            order = np.argsort(np.abs(r), kind="stable")[:keep]
            p, q, n, r = p[order], q[order], n[order], r[order]
        if len(r) < MIN_CORRESPONDENCES:
            raise TooFewCorrespondences(f"{len(r)} correspondences after trimming")
        rmse = float(np.sqrt(np.mean(r * r)))
        return p, q, n, rmse

    T = init
    history: list[float] = []
    converged = False
    iterations = 0
    inlier_fraction = 0.0
    for _ in range(params.max_iterations):
        iterations += 1
        p, q, n, rmse = correspond(T)
        inlier_fraction = len(p) / len(src)
        if history and rmse > history[-1] + 1e-12:
            # The last step hurt: retry once at half scale, else reject it
            # and stop (stalled at the noise floor / a local optimum).
            T_prev, x_prev = last_state
            T_half = _step_transform(x_prev, 0.5) @ T_prev
            try:
                half = correspond(T_half)
            except TooFewCorrespondences:
                half = None
            if half is not None and half[3] <= history[-1] + 1e-12:
                T, (p, q, n, rmse) = T_half, half
            else:
                T = T_prev
                converged = True
                break
        history.append(rmse)
        x = _solve_point_to_plane(p, q, n)
        last_state = (T, x)
        T = _step_transform(x) @ T
        if (np.linalg.norm(x[3:]) < params.convergence_trans_eps
                and np.linalg.norm(x[:3]) < params.convergence_rot_eps):
            converged = True
            break
    final_rmse = history[-1] if history else float("inf")
    return IcpResult(T, iterations, final_rmse, inlier_fraction, converged, tuple(history))


def select_submap(graph: PoseGraph, current_vertex: int, localized: Transform) -> int:
    """Nearest of {previous, current, next} vertex origins, by edge compounding."""
    pos = localized.translation
    best_id = current_vertex
    best_d = float(np.linalg.norm(pos - np.zeros(3)))
    for cand in (current_vertex + 1, current_vertex - 1):
        if cand < 0 or cand >= len(graph.vertices):
            continue
        origin = graph.relative_pose(current_vertex, cand).translation
        d = float(np.linalg.norm(pos - origin))
        if d < best_d:
            best_d = d
            best_id = cand
    return best_id


def step_vehicle(state: VehicleState, cmd: Twist, dt: float,
                 v_max: float = 1.0, omega_max: float = 1.5) -> VehicleState:
    """Exact unicycle arc update for a constant planar twist over dt."""
    if not (dt > 0.0 and math.isfinite(dt)):
        raise InvalidConfig("dt must be positive and finite")
    v = float(np.clip(cmd.linear[0], -v_max, v_max))
    w = float(np.clip(cmd.angular[2], -omega_max, omega_max))
    x, y, z = state.pose.translation
    yaw = state.pose.yaw
    if abs(w) < 1e-12:
        x += v * dt * math.cos(yaw)
        y += v * dt * math.sin(yaw)
        new_yaw = yaw
    else:
        new_yaw = yaw + w * dt
        x += v / w * (math.sin(new_yaw) - math.sin(yaw))
        y -= v / w * (math.cos(new_yaw) - math.cos(yaw))
    pose = Transform.from_xyyaw(x, y, new_yaw, z)
    return VehicleState(pose, Twist.planar(v, w), state.wheel_track, state.tire_width)


def _catmull_rom(p0, p1, p2, p3, ts):
    ts = ts[:, None]
    return 0.5 * ((2.0 * p1) + (-p0 + p2) * ts
                  + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * ts ** 2
                  + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * ts ** 3)


class _LocalPath:
    """Spline through nearby vertex origins, expressed in the active vertex frame."""

    def __init__(self, graph: PoseGraph, active: int, behind: int = 2, ahead: int = 4,
                 sample_step: float = 0.25):
        n = len(graph.vertices)
        lo = max(0, active - behind)
        hi = min(n - 1, active + ahead)
        ctrl = np.array([graph.relative_pose(active, i).translation
                         for i in range(lo, hi + 1)])
        self.reaches_end = hi == n - 1
        if len(ctrl) == 1:
            self.samples = ctrl
            self.arc = np.zeros(1)
            return
        padded = np.vstack([ctrl[0], ctrl, ctrl[-1]])
        pieces = []
        for i in range(len(ctrl) - 1):
            seg_len = float(np.linalg.norm(ctrl[i + 1] - ctrl[i]))
            m = max(2, int(math.ceil(seg_len / sample_step)))
            ts = np.linspace(0.0, 1.0, m, endpoint=False)
            pieces.append(_catmull_rom(padded[i], padded[i + 1], padded[i + 2],
                                       padded[i + 3], ts))
        pieces.append(ctrl[-1][None, :])
        self.samples = np.concatenate(pieces, axis=0)
        steps = np.linalg.norm(np.diff(self.samples, axis=0), axis=1)
        self.arc = np.concatenate([[0.0], np.cumsum(steps)])

    def project(self, pos: np.ndarray) -> float:
        d = np.linalg.norm(self.samples - pos, axis=1)
        return float(self.arc[int(np.argmin(d))])

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), float(self.arc[-1]))
        i = int(np.searchsorted(self.arc, s, side="right")) - 1
        i = min(max(i, 0), len(self.samples) - 2)
        span = self.arc[i + 1] - self.arc[i]
        a = 0.0 if span <= 1e-12 else (s - self.arc[i]) / span
        return (1 - a) * self.samples[i] + a * self.samples[i + 1]

    def curvature_at(self, s: float, h: float = 0.5) -> float:
        a = self.point_at(s - h)[:2]
        b = self.point_at(s)[:2]
        c = self.point_at(s + h)[:2]
        ab, bc, ca = b - a, c - b, a - c
        area2 = abs(ab[0] * bc[1] - ab[1] * bc[0])
        denom = np.linalg.norm(ab) * np.linalg.norm(bc) * np.linalg.norm(ca)
        if denom < 1e-12:
            return 0.0
        return float(2.0 * area2 / denom)


def track_path(localized: Transform, graph: PoseGraph, active_vertex: int,
               lookahead: float, gains: ControllerConfig,
               path_cache: dict | None = None) -> Twist:
    """Pure-pursuit command toward a lookahead point on the taught path.

    Speed is scheduled down with path curvature at the target.

    Raises:
        EndOfPath: the lookahead target passed the final vertex.
    """
    if path_cache is not None and active_vertex in path_cache:
        path = path_cache[active_vertex]
    else:
        path = _LocalPath(graph, active_vertex)
        if path_cache is not None:
            path_cache[active_vertex] = path
    s_proj = path.project(localized.translation)
    s_target = s_proj + lookahead
    if path.reaches_end and s_target >= float(path.arc[-1]):
        raise EndOfPath("lookahead passed the final vertex")
    target_local = localized.inverse().apply(path.point_at(s_target))
    xt, yt = target_local[0], target_local[1]
    L2 = xt * xt + yt * yt
    kappa_cmd = 0.0 if L2 < 1e-9 else 2.0 * yt / L2
    kappa_path = path.curvature_at(s_target)
    v = gains.v_max * max(gains.min_speed_frac, 1.0 - abs(kappa_path) * gains.k_curv)
    omega = float(np.clip(v * kappa_cmd, -gains.omega_max, gains.omega_max))
    return Twist.planar(v, omega)


def tire_lateral_offset(true_pose: Transform, marker_position: np.ndarray,
                        wheel_track: float, tire_width: float) -> float:
    """Signed distance from the rear-right tire outer edge to a marker.

    Positive when the marker sits outboard (further right) of the tire.
    """
    local = true_pose.inverse().apply(np.asarray(marker_position, dtype=float))
    tire_y = -(wheel_track / 2.0 + tire_width / 2.0)
    return float(tire_y - local[1])


@dataclass(frozen=True)
class MarkerAnchor:
    """Marker station expressed relative to the pose graph (teach-time product)."""

    marker_id: int
    vertex_id: int
    x_offset: float  # longitudinal coordinate in the anchor vertex frame
    taught_offset: float  # tire-to-marker offset measured on the taught path


def _cycle_seed(seed: int, tick: int, salt: int) -> int:
    ss = np.random.SeedSequence([int(seed), int(tick), int(salt)])
    return int(ss.generate_state(1, np.uint64)[0])


def run_repeat(world: World, graph: PoseGraph, lidar: LidarModel, icp: IcpParams,
               controller: ControllerConfig, start_pose: Transform, seed: int,
               control_rate: float = 10.0, sensor_height: float = 0.8,
               scan_crop: float | None = 8.0, icp_max_points: int = 1200,
               marker_anchors: list[MarkerAnchor] | None = None,
               marker_pause_window: float = 0.3,
               vehicle: VehicleState | None = None,
               max_duration: float | None = None) -> RepeatLog:
    """Drive the taught chain autonomously and log every cycle.

    The vehicle starts at `start_pose` (assumed within the first submap's
    convergence basin).  Five consecutive non-converged ICP cycles stop the
    vehicle and truncate the log with a failure reason.
    """
    dt = 1.0 / control_rate
    sensor_offset = Transform.from_translation(0.0, 0.0, sensor_height)
    sensor_offset_inv = sensor_offset.inverse()
    log = RepeatLog(seed=int(seed), control_rate=control_rate)
    if len(graph.vertices) < 2:
        log.failure_reason = "graph has fewer than 2 vertices"
        return log

    x, y = start_pose.translation[0], start_pose.translation[1]
    pose = Transform.from_xyyaw(x, y, start_pose.yaw, world.ground_height(x, y))
    state = VehicleState(pose) if vehicle is None else \
        VehicleState(pose, Twist.zero(), vehicle.wheel_track, vehicle.tire_width)

    chain_length = sum(float(np.linalg.norm(e.relative.translation)) for e in graph.edges)
    if max_duration is None:
        max_duration = chain_length / max(0.2 * controller.v_max, 0.05) + 120.0
    max_ticks = int(max_duration * control_rate)

    trees: dict[int, cKDTree] = {}
    path_cache: dict[int, _LocalPath] = {}
    markers_by_id = {m.id: m for m in world.markers}
    anchors = list(marker_anchors or [])
    measured_ids: set[int] = set()

    active = 0
    estimate = Transform.from_xyyaw(0.0, 0.0, 0.0)  # vehicle in vertex-0 frame
    failures = 0

    for tick in range(max_ticks):
        t_now = tick * dt
        # Ground-truth upkeep: the vehicle rides on the terrain.
        x, y = state.pose.translation[0], state.pose.translation[1]
        state.pose = Transform.from_xyyaw(x, y, state.pose.yaw, world.ground_height(x, y))

        scan = simulate_scan(world, state.pose @ sensor_offset, lidar,
                             _cycle_seed(seed, tick, 0))
        pts = scan.points
        if scan_crop is not None and len(pts):
            pts = pts[np.linalg.norm(pts, axis=1) <= scan_crop]
        if icp_max_points and len(pts) > icp_max_points:
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), tick, 1]))
            pts = pts[np.sort(rng.choice(len(pts), icp_max_points, replace=False))]
        scan_icp = PointCloud(pts)

        predicted = estimate @ exp_map(state.commanded.scaled(dt))
        submap = graph.vertices[active].submap
        if submap is None:
            log.failure_reason = f"vertex {active} has no submap"
            break
        if active not in trees:
            trees[active] = cKDTree(submap.cloud.points)
        try:
            result = icp_point_to_plane(scan_icp, submap, predicted @ sensor_offset,
                                        icp, tree=trees[active])
        except (TooFewCorrespondences, NonFiniteSolution):
            result = IcpResult(predicted @ sensor_offset, 0, float("inf"), 0.0, False)
        if result.converged:
            estimate = result.transform @ sensor_offset_inv
            failures = 0
        else:
            estimate = predicted
            failures += 1

        new_active = select_submap(graph, active, estimate)
        if new_active != active:
            estimate = graph.relative_pose(new_active, active) @ estimate
            active = new_active

        finished = False
        try:
            cmd = track_path(estimate, graph, active, controller.lookahead,
                             controller, path_cache=path_cache)
        except EndOfPath:
            cmd = Twist.zero()
            finished = True

        if failures >= 5:
            log.entries.append(LogEntry(t_now, active, estimate, result,
                                        Twist.zero(), state.pose))
            log.failure_reason = f"LocalizationLost at t={t_now:.1f}s"
            break

        paused = False
        for anchor in anchors:
            if anchor.marker_id in measured_ids:
                continue
            if abs(anchor.vertex_id - active) > 1:
                continue
            in_anchor = graph.relative_pose(anchor.vertex_id, active) @ estimate
            if (abs(in_anchor.translation[0] - anchor.x_offset) <= marker_pause_window
                    and abs(in_anchor.translation[1]) <= 3.0):
                marker = markers_by_id.get(anchor.marker_id)
                if marker is None:
                    continue
                offset = tire_lateral_offset(state.pose, marker.position,
                                             state.wheel_track, state.tire_width)
                log.marker_events.append(MarkerEvent(anchor.marker_id, offset, t_now))
                measured_ids.add(anchor.marker_id)
                paused = True
        if paused:
            cmd = Twist.zero()

        log.entries.append(LogEntry(t_now, active, estimate, result, cmd, state.pose))
        if finished:
            log.completed = True
            break
        state = step_vehicle(state, cmd, dt, controller.v_max, controller.omega_max)
    else:
        log.failure_reason = f"timeout after {max_duration:.0f}s"
    return log


# --- serialization: line-delimited records plus a summary document ---------

_ENTRY_FIELDS = "time, active_vertex, localized pose (3x4 row-major), icp " \
    "{iterations, rmse, inlier_fraction, converged}, command (v, omega), " \
    "true world pose (3x4 row-major)"


def _pose_list(t: Transform) -> list[float]:
    return [float(v) for v in t.matrix34().ravel()]


def save_repeat_log(log: RepeatLog, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "log.jsonl", "w") as fh:
        for e in log.entries:
            fh.write(json.dumps({
                "t": e.time,
                "vertex": e.active_vertex,
                "pose_v": _pose_list(e.localized),
                "icp": {
                    "iterations": e.icp.iterations,
                    "rmse": e.icp.final_rmse,
                    "inliers": e.icp.inlier_fraction,
                    "converged": e.icp.converged,
                },
                "cmd": [float(e.command.linear[0]), float(e.command.angular[2])],
                "pose_w": _pose_list(e.true_pose),
            }) + "\n")
    summary = {
        "version": 1,
        "field_order": _ENTRY_FIELDS,
        "seed": log.seed,
        "control_rate": log.control_rate,
        "completed": log.completed,
        "failure_reason": log.failure_reason,
        "n_entries": len(log.entries),
        "marker_events": [
            {"marker_id": m.marker_id, "measured_offset": m.measured_offset, "t": m.time}
            for m in log.marker_events
        ],
    }
    (directory / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


def load_repeat_log(directory: str | Path) -> RepeatLog:
    directory = Path(directory)
    summary = json.loads((directory / "summary.json").read_text())
    log = RepeatLog(seed=summary["seed"], control_rate=summary["control_rate"],
                    completed=summary["completed"],
                    failure_reason=summary["failure_reason"])
    for m in summary["marker_events"]:
        log.marker_events.append(MarkerEvent(m["marker_id"], m["measured_offset"], m["t"]))
    with open(directory / "log.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            icp = IcpResult(Transform.identity(), rec["icp"]["iterations"],
                            rec["icp"]["rmse"], rec["icp"]["inliers"],
                            rec["icp"]["converged"])
            log.entries.append(LogEntry(
                rec["t"], rec["vertex"],
                Transform.from_matrix34(np.array(rec["pose_v"]).reshape(3, 4)),
                icp, Twist.planar(rec["cmd"][0], rec["cmd"][1]),
                Transform.from_matrix34(np.array(rec["pose_w"]).reshape(3, 4)),
            ))
    return log
