// Envelope wire format shared with the server. See docs/protocol.md.

export const PROTOCOL_VERSION = 1;

export type EnvelopeType = "telemetry" | "command" | "ack" | "event" | "lease";

export interface Envelope<P = unknown> {
  v: number;
  type: EnvelopeType;
  topic: string;
  seq: number;
  t: number;
  payload: P;
}

export type Effector = "left" | "right";
export type Mode = "position" | "orientation";
export type Axis = "x" | "y" | "z";

export interface CommandPayload {
  kind: "power" | "select" | "delta" | "gripper" | "behavior" | "stop";
  effector?: string;
  mode?: Mode;
  axis?: Axis;
  dir?: 1 | -1;
  action?: string;
  name?: string;
}

export interface AckPayload {
  of_seq: number;
  status: "accepted" | "rejected";
  reason?: string;
}

export interface FramePose {
  p: [number, number, number];
  quat: [number, number, number, number];
}

export interface TelemetryPayload {
  sample_t: number;
  q: number[];
  effectors: Record<string, FramePose>;
  grippers: Record<string, number>;
  object?: [number, number, number] | null;
  attached?: string | null;
  status: { error_norms?: number[]; fault?: string | null };
}

export type RobotEvent =
  | { event: "behavior_started"; name: string }
  | { event: "behavior_complete"; name: string }
  | { event: "behavior_stopped"; name: string }
  | { event: "motion_complete"; effector: string }
  | { event: "command_rejected"; of_seq: number; reason: string }
  | { event: "power"; on: boolean }
  | { event: "constraints_updated"; independent_joints: number };

export interface LeasePayload {
  session: string;
  role: "operator" | "observer";
  held: boolean;
  epoch: number;
  powered: boolean;
  timeout_s: number;
}

export function envelope<P>(type: EnvelopeType, topic: string, seq: number, t: number, payload: P): Envelope<P> {
  return { v: PROTOCOL_VERSION, type, topic, seq, t, payload };
}

export function commandEnvelope(seq: number, t: number, payload: CommandPayload): Envelope<CommandPayload> {
  return envelope("command", "/operator_cmds", seq, t, payload);
}

export function leaseEnvelope(seq: number, t: number, action: "request" | "release"): Envelope<{ action: string }> {
  return envelope("lease", "/lease", seq, t, { action });
}

/** Parse an inbound frame; null for anything that is not a v1 envelope. */
export function parseEnvelope(text: string): Envelope | null {
  let value: unknown;
  try {
    value = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof value !== "object" || value === null) return null;
  const env = value as Partial<Envelope>;
  if (env.v !== PROTOCOL_VERSION || typeof env.type !== "string" || typeof env.seq !== "number") return null;
  return env as Envelope;
}
