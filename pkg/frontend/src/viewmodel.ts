// Render-side state. Everything shown comes from server snapshots; the
// client never simulates vehicle motion. Snapshot application is idempotent
// per tick and stale snapshots are dropped.

import type { ControlAckMsg, ServerMsg, StateMsg } from "./protocol.js";

export type ConnectionHealth = "connecting" | "connected" | "lost";

export interface TeachSummary {
  vertexCount: number;
  pathLength: number;
  markerCount: number;
  artifactsDir: string;
}

export class ViewModel {
  health: ConnectionHealth = "connecting";
  session = "";
  mode = "idle";
  tick = -1;
  pose: [number, number, number, number] = [0, 0, 0, 0];
  scan: number[][] = [];
  markers: number[][] = [];
  path: number[][] = [];
  extent: [number, number, number, number] = [-50, 50, -50, 50];
  lastError = "";
  summary: TeachSummary | null = null;
  lastHeartbeatTick = -1;

  /** Apply one server message; returns true when something visible changed. */
  apply(msg: ServerMsg): boolean {
    switch (msg.type) {
      case "hello":
        this.health = "connected";
        this.session = msg.session;
        this.extent = msg.extent;
        return true;
      case "state":
        return this.applyState(msg);
      case "heartbeat":
        this.lastHeartbeatTick = msg.tick;
        return false;
      case "control_ack":
        return this.applyAck(msg);
      case "error":
        this.lastError = `${msg.error}: ${msg.message}`;
        return true;
      case "closed":
        this.health = "lost";
        return true;
    }
  }

  private applyState(msg: StateMsg): boolean {
    if (msg.tick <= this.tick) {
      return false; // stale or duplicate snapshot
    }
    this.tick = msg.tick;
    this.mode = msg.mode;
    this.pose = msg.pose;
    this.scan = msg.scan;
    this.markers = msg.markers;
    this.path = msg.path;
    return true;
  }

  private applyAck(msg: ControlAckMsg): boolean {
    this.mode = msg.mode;
    this.lastError = "";
    if (msg.action === "finish_teach" && msg.vertex_count !== undefined) {
      this.summary = {
        vertexCount: msg.vertex_count,
        pathLength: msg.path_length ?? 0,
        markerCount: msg.marker_count ?? 0,
        artifactsDir: msg.artifacts_dir ?? "",
      };
    }
    if (msg.action === "start_teach" || msg.action === "abort_teach") {
      this.summary = null;
    }
    return true;
  }
}
