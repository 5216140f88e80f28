"""Interactive piloting service: live sessions for teaching by hand.

One deterministic simulation core per session, stepped at the teach rate by
an asyncio loop; network handlers only exchange messages with it (commands
in, state snapshots out).  Sessions share nothing, so several can run
concurrently.  The wire protocol carries JSON messages over WebSocket frames:

    client -> server: {"type": "hello", "client": str}
                      {"type": "command", "v": float, "omega": float}
                      {"type": "control", "action": "start_teach" |
                                          "finish_teach" | "abort_teach"}
    server -> client: {"type": "hello", "session": str, "tick": int, ...}
                      {"type": "state", ...}          (>= 10 Hz)
                      {"type": "heartbeat", "tick": int}   (every 1 s)
                      {"type": "control_ack", "action": str, ...}
                      {"type": "error", "error": str, "message": str}

The 20 Hz recording clock is driven by simulation ticks, never wall time: a
stale command (>= 500 ms without refresh) is zeroed by the dead-man rule,
and a slow client cannot corrupt the teach path.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import math
import secrets
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ws
from .errors import PathTooShort, SessionClosed, WrongMode
from .pipeline import RunConfig, TeachArtifacts, teach_from_stream, write_teach_artifacts
from .repeat import VehicleState, step_vehicle
from .se3 import Transform, Twist
from .sensor import simulate_scan
from .world import World, generate_world

DEADMAN_TICKS = 10  # 500 ms at the 20 Hz simulation rate
SNAPSHOT_EVERY = 2  # ticks between state snapshots (>= 10 Hz)
HEARTBEAT_EVERY = 20  # ticks between heartbeats (1 s)
MAX_SNAPSHOT_POINTS = 4096


@dataclass
class TranscriptEntry:
    tick: int
    v: float
    omega: float


class SessionCore:
    """Deterministic session state machine; one tick = 1/teach_rate seconds.

    All mutation happens through tick()/set_command()/mode transitions, so a
    recorded command transcript replayed into a fresh core with the same
    seed reproduces the identical teach path bit-exactly.
    """

    def __init__(self, cfg: RunConfig, seed: int | None = None):
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else int(seed)
        self.world: World = generate_world(cfg.world_config, self.seed)
        spawn = cfg.raw.get("spawn") or self._default_spawn()
        x, y, yaw = float(spawn[0]), float(spawn[1]), math.radians(float(spawn[2]))
        pose = Transform.from_xyyaw(x, y, yaw, self.world.ground_height(x, y))
        self.vehicle = VehicleState(pose,
                                    wheel_track=float(cfg.vehicle["wheel_track"]),
                                    tire_width=float(cfg.vehicle["tire_width"]))
        self.mode = "idle"
        self.tick_count = 0
        self.command = Twist.zero()
        self.command_age = DEADMAN_TICKS  # stale until the first command
        self.recording: list[tuple[float, Transform]] = []
        self.transcript: list[TranscriptEntry] = []
        self.closed = False
        self.dt = 1.0 / cfg.teach_rate
        self.v_max = float(cfg.controller.v_max)
        self.omega_max = float(cfg.controller.omega_max)

    def _default_spawn(self):
        from .pipeline import route_pose_stream
        try:
            start = route_pose_stream(self.cfg.route, None, self.cfg.teach_rate)[0][1]
            return [start.translation[0], start.translation[1],
                    math.degrees(start.yaw)]
        except Exception:
            return [0.0, 0.0, 0.0]

    # -- commands and transitions --------------------------------------------

    def set_command(self, v: float, omega: float) -> None:
        if self.closed:
            raise SessionClosed("session is closed")
        if self.mode != "teaching":
            raise WrongMode(f"commands require teaching mode, not {self.mode}")
        v = float(np.clip(v, -self.v_max, self.v_max))
        omega = float(np.clip(omega, -self.omega_max, self.omega_max))
        self.command = Twist.planar(v, omega)
        self.command_age = 0
        self.transcript.append(TranscriptEntry(self.tick_count, v, omega))

    def start_teach(self) -> None:
        if self.closed:
            raise SessionClosed("session is closed")
        if self.mode != "idle":
            raise WrongMode(f"cannot start teaching from mode {self.mode}")
        self.mode = "teaching"
        self.recording = [(self.tick_count * self.dt, self.vehicle.pose)]
        self.transcript = []
        self.command = Twist.zero()
        self.command_age = DEADMAN_TICKS

    def abort_teach(self) -> None:
        if self.mode != "teaching":
            raise WrongMode("nothing to abort")
        self.mode = "idle"
        self.recording = []
        self.command = Twist.zero()

    def finish_teach(self) -> TeachArtifacts:
        if self.mode != "teaching":
            raise WrongMode("not teaching")
        if len(self.recording) < 3:
            raise PathTooShort(f"only {len(self.recording) - 1} recorded steps")
        stream = self.recording
        self.mode = "idle"
        self.recording = []
        self.command = Twist.zero()
        return teach_from_stream(self.cfg, self.world, stream)

    # -- simulation ------------------------------------------------------------

    def tick(self) -> None:
        """One 20 Hz simulation step (dead-man, integration, recording)."""
        if self.closed:
            raise SessionClosed("session is closed")
        self.command_age += 1
        cmd = self.command if self.command_age <= DEADMAN_TICKS else Twist.zero()
        self.vehicle = step_vehicle(self.vehicle, cmd, self.dt,
                                    self.v_max, self.omega_max)
        x, y = self.vehicle.pose.translation[0], self.vehicle.pose.translation[1]
        self.vehicle.pose = Transform.from_xyyaw(
            x, y, self.vehicle.pose.yaw, self.world.ground_height(x, y))
        self.tick_count += 1
        if self.mode == "teaching":
            self.recording.append((self.tick_count * self.dt, self.vehicle.pose))

    def replay(self, transcript: list[TranscriptEntry], ticks: int) -> None:
        """Feed a transcript into this fresh core, tick-for-tick."""
        queue = list(transcript)
        while self.tick_count < ticks:
            while queue and queue[0].tick == self.tick_count:
                entry = queue.pop(0)
                self.set_command(entry.v, entry.omega)
            self.tick()

    def snapshot(self, scan_points: np.ndarray | None) -> dict:
        pose = self.vehicle.pose
        path_xy = [[float(p.translation[0]), float(p.translation[1])]
                   for _, p in self.recording[::4]]
        return {
            "type": "state",
            "tick": self.tick_count,
            "mode": self.mode,
            "pose": [float(pose.translation[0]), float(pose.translation[1]),
                     float(pose.translation[2]), float(pose.yaw)],
            "scan": scan_points.round(3).tolist() if scan_points is not None else [],
            "markers": [[float(v) for v in m.position] for m in self.world.markers],
            "path": path_xy,
        }


class Session:
    """Asyncio wrapper: wall-clock pacing, snapshot fan-out, artifacts dir."""

    def __init__(self, cfg: RunConfig, seed: int, out_dir: Path):
        self.id = secrets.token_hex(4)
        self.core = SessionCore(cfg, seed)
        self.out_dir = out_dir
        self.subscribers: set[asyncio.Queue] = set()
        self.task: asyncio.Task | None = None

    def subscribe(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=8)
        self.subscribers.add(q)
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        self.subscribers.discard(q)

    def _publish(self, message: dict) -> None:
        for q in self.subscribers:
            if q.full():
                try:
                    q.get_nowait()  # drop the oldest snapshot
                except asyncio.QueueEmpty:
                    pass
            q.put_nowait(message)

    async def run(self) -> None:
        core = self.core
        loop = asyncio.get_running_loop()
        next_tick = loop.time()
        try:
            while not core.closed:
                core.tick()
                if core.tick_count % SNAPSHOT_EVERY == 0:
                    scan = simulate_scan(
                        core.world,
                        core.vehicle.pose @ Transform.from_translation(
                            0, 0, float(core.cfg.repeat["sensor_height"])),
                        core.cfg.lidar,
                        seed=core.tick_count)
                    pts = core.vehicle.pose.apply(scan.points) if len(scan) else scan.points
                    if len(pts) > MAX_SNAPSHOT_POINTS:
                        stride = int(math.ceil(len(pts) / MAX_SNAPSHOT_POINTS))
                        pts = pts[::stride]
                    self._publish(core.snapshot(pts))
                if core.tick_count % HEARTBEAT_EVERY == 0:
                    self._publish({"type": "heartbeat", "tick": core.tick_count})
                next_tick += core.dt
                delay = next_tick - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                else:
                    next_tick = loop.time()  # fell behind; don't burst
        except asyncio.CancelledError:
            pass

    def close(self) -> None:
        self.core.closed = True
        if self.task is not None:
            self.task.cancel()
        end = {"type": "closed"}
        self._publish(end)


def _finish_payload(session: Session, artifacts: TeachArtifacts,
                    transcript: list, start_tick: int, final_tick: int) -> dict:
    out = session.out_dir / f"session_{session.id}"
    write_teach_artifacts(artifacts, out)
    teach_file = out / "teach_path.txt"
    digest = hashlib.sha256(teach_file.read_bytes()).hexdigest()
    return {
        "vertex_count": len(artifacts.graph.vertices),
        "path_length": artifacts.teach_path.length(),
        "marker_count": len(artifacts.marker_records),
        "artifacts_dir": str(out),
        "teach_path_sha256": digest,
        # Enough to replay the drive into a fresh session deterministically.
        "transcript": transcript,
        "start_tick": start_tick,
        "final_tick": final_tick,
    }


async def _handle_client(server, reader: asyncio.StreamReader,
                         writer: asyncio.StreamWriter) -> None:
    try:
        await ws.server_handshake(reader, writer)
    except ws.WsClosed:
        writer.close()
        return
    cfg, out_dir, sessions = server
    # Sessions outlive connections: a client may reconnect mid-teach and
    # re-attach by session id; the dead-man keeps the vehicle safe meanwhile.
    session: Session | None = None
    queue: asyncio.Queue | None = None
    pump: asyncio.Task | None = None
    send_lock = asyncio.Lock()

    async def send(msg: dict) -> None:
        async with send_lock:
            await ws.send_text(writer, json.dumps(msg))

    async def pump_snapshots(q: asyncio.Queue) -> None:
        while True:
            msg = await q.get()
            await send(msg)
            if msg.get("type") == "closed":
                return

    try:
        while True:
            text = await ws.recv_text(reader, writer)
            try:
                msg = json.loads(text)
            except json.JSONDecodeError:
                await send({"type": "error", "error": "BadMessage",
                            "message": "not valid JSON"})
                continue
            kind = msg.get("type")
            try:
                if kind == "hello":
                    wanted = msg.get("session")
                    if session is None:
                        existing = sessions.get(wanted) if wanted else None
                        if existing is not None and not existing.core.closed:
                            session = existing
                        elif wanted:
                            raise SessionClosed(f"session {wanted} is not live")
                        else:
                            session = Session(cfg, cfg.seed, out_dir)
                            sessions[session.id] = session
                            session.task = asyncio.create_task(session.run())
                        queue = session.subscribe()
                        pump = asyncio.create_task(pump_snapshots(queue))
                    await send({"type": "hello", "session": session.id,
                                "protocol": 1, "tick": session.core.tick_count,
                                "rate": cfg.teach_rate,
                                "extent": list(session.core.world.extent)})
                elif session is None:
                    await send({"type": "error", "error": "BadMessage",
                                "message": "hello required before other messages"})
                elif kind == "command":
                    session.core.set_command(float(msg.get("v", 0.0)),
                                             float(msg.get("omega", 0.0)))
                elif kind == "control":
                    action = msg.get("action")
                    if action == "start_teach":
                        session.core.start_teach()
                        await send({"type": "control_ack", "action": action,
                                    "mode": session.core.mode})
                    elif action == "abort_teach":
                        session.core.abort_teach()
                        await send({"type": "control_ack", "action": action,
                                    "mode": session.core.mode})
                    elif action == "finish_teach":
                        core = session.core
                        start_tick = (int(round(core.recording[0][0] * cfg.teach_rate))
                                      if core.recording else 0)
                        transcript = [[e.tick, e.v, e.omega] for e in core.transcript]
                        artifacts = core.finish_teach()
                        final_tick = core.tick_count
                        payload = await asyncio.get_running_loop().run_in_executor(
                            None, _finish_payload, session, artifacts,
                            transcript, start_tick, final_tick)
                        payload.update({"type": "control_ack", "action": action,
                                        "mode": session.core.mode})
                        await send(payload)
                    elif action == "close_session":
                        session.close()
                        sessions.pop(session.id, None)
                        await send({"type": "control_ack", "action": action,
                                    "mode": "closed"})
                    else:
                        await send({"type": "error", "error": "BadMessage",
                                    "message": f"unknown action {action!r}"})
                else:
                    await send({"type": "error", "error": "BadMessage",
                                "message": f"unknown message type {kind!r}"})
            except (WrongMode, PathTooShort, SessionClosed) as exc:
                await send({"type": "error", "error": type(exc).__name__,
                            "message": str(exc)})
    except ws.WsClosed:
        pass
    finally:
        if pump is not None:
            pump.cancel()
        if session is not None and queue is not None:
            session.unsubscribe(queue)
        try:
            await ws.send_close(writer)
        except Exception:
            pass
        writer.close()


async def serve(cfg: RunConfig, host: str = "127.0.0.1", port: int = 8750,
                out_dir: str | Path = "out/sessions"):
    """Start the service; returns the asyncio server object."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sessions: dict[str, Session] = {}

    async def handler(reader, writer):
        await _handle_client((cfg, out, sessions), reader, writer)

    server = await asyncio.start_server(handler, host, port)
    server.trsim_sessions = sessions
    return server


def serve_forever(cfg: RunConfig, host: str = "127.0.0.1", port: int = 8750,
                  out_dir: str | Path = "out/sessions") -> None:
    async def _main():
        server = await serve(cfg, host, port, out_dir)
        addr = server.sockets[0].getsockname()
        print(f"piloting service listening on ws://{addr[0]}:{addr[1]}/", flush=True)
        async with server:
            await server.serve_forever()

    try:
        asyncio.run(_main())
    except KeyboardInterrupt:
        pass
