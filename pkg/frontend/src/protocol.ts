// Wire protocol of the piloting service: JSON messages over a WebSocket.
// The client only ever sends hello / command / control; everything else is
// server -> client.

export interface HelloMsg {
  type: "hello";
  session: string;
  protocol: number;
  tick: number;
  rate: number;
  extent: [number, number, number, number];
}

export interface StateMsg {
  type: "state";
  tick: number;
  mode: "idle" | "teaching" | "repeating" | "paused";
  pose: [number, number, number, number]; // x, y, z, yaw
  scan: number[][]; // world-frame points, decimated
  markers: number[][];
  path: number[][]; // recorded path polyline (x, y)
}

export interface HeartbeatMsg {
  type: "heartbeat";
  tick: number;
}

export interface ControlAckMsg {
  type: "control_ack";
  action: string;
  mode: string;
  vertex_count?: number;
  path_length?: number;
  marker_count?: number;
  artifacts_dir?: string;
  teach_path_sha256?: string;
  transcript?: [number, number, number][];
  start_tick?: number;
  final_tick?: number;
}

export interface ErrorMsg {
  type: "error";
  error: string;
  message: string;
}

export interface ClosedMsg {
  type: "closed";
}

export type ServerMsg =
  | HelloMsg
  | StateMsg
  | HeartbeatMsg
  | ControlAckMsg
  | ErrorMsg
  | ClosedMsg;

export type TeachAction = "start_teach" | "finish_teach" | "abort_teach";

export function encodeHello(client: string, session?: string): string {
  if (session) {
    return JSON.stringify({ type: "hello", client, session });
  }
  return JSON.stringify({ type: "hello", client });
}

export function encodeCommand(v: number, omega: number): string {
  return JSON.stringify({ type: "command", v, omega });
}

export function encodeControl(action: TeachAction): string {
  return JSON.stringify({ type: "control", action });
}

const SERVER_TYPES = new Set([
  "hello",
  "state",
  "heartbeat",
  "control_ack",
  "error",
  "closed",
]);

/** Parse a server frame; returns null for anything malformed or unknown. */
export function decodeServerMsg(text: string): ServerMsg | null {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const msg = doc as { type?: unknown };
  if (typeof msg.type !== "string" || !SERVER_TYPES.has(msg.type)) return null;
  if (msg.type === "state") {
    const s = doc as Partial<StateMsg>;
    if (
      typeof s.tick !== "number" ||
      !Array.isArray(s.pose) ||
      s.pose.length !== 4
    ) {
      return null;
    }
  }
  return doc as ServerMsg;
}
