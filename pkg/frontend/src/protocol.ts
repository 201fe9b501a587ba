// Wire protocol frames exchanged with the live service (JSON text frames).

export interface TelemetryState {
  px: number;
  py: number;
  psi: number;
  vx: number;
  vy: number;
  r: number;
  s: number;
  e_lat: number;
  mu: number;
}

export interface TelemetryFrame {
  type: "telemetry";
  t: number;
  state: TelemetryState;
  ud: [number, number];
  u: [number, number];
  intervention: number;
  corners: [number, number];
  slack: number;
  status: string;
}

export interface TrajectoryFrame {
  type: "trajectory";
  pts: [number, number][];
}

export interface TrackFrame {
  type: "track";
  half_width: number;
  centerline: [number, number][];
}

export interface ErrorFrame {
  type: "error";
  msg: string;
}

export interface AckFrame {
  type: "ack";
  clamped: boolean;
  delta: number;
  tau: number;
}

export type ServerFrame =
  | TelemetryFrame
  | TrajectoryFrame
  | TrackFrame
  | ErrorFrame
  | AckFrame;

export interface InputFrame {
  type: "input";
  delta: number;
  tau: number;
}

export function parseServerFrame(raw: string): ServerFrame | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const type = (doc as { type?: unknown }).type;
  if (
    type === "telemetry" ||
    type === "trajectory" ||
    type === "track" ||
    type === "error" ||
    type === "ack"
  ) {
    return doc as ServerFrame;
  }
  return null;
}
