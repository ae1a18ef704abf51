// Operator panel state machine. No DOM access: the page feeds it presses and
// inbound envelopes and renders whatever it reports.

import {
  AckPayload,
  Axis,
  CommandPayload,
  Effector,
  Envelope,
  LeasePayload,
  Mode,
  RobotEvent,
  commandEnvelope,
  leaseEnvelope,
} from "./protocol.js";

export type Control =
  | { id: "power" }
  | { id: "select_effector"; effector: Effector }
  | { id: "select_mode"; mode: Mode }
  | { id: "delta"; axis: Axis; dir: 1 | -1 }
  | { id: "gripper"; open: boolean }
  | { id: "behavior"; name: string }
  | { id: "stop" }
  | { id: "lease" };

export function controlKey(c: Control): string {
  switch (c.id) {
    case "select_effector":
      return `effector:${c.effector}`;
    case "select_mode":
      return `mode:${c.mode}`;
    case "delta":
      return `delta:${c.dir > 0 ? "+" : "-"}${c.axis}`;
    case "gripper":
      return `gripper:${c.open ? "open" : "close"}`;
    case "behavior":
      return `behavior:${c.name}`;
    default:
      return c.id;
  }
}

export interface PanelState {
  power: boolean;
  effector: Effector;
  mode: Mode;
  lease: "held" | "observer";
  connection: "connected" | "reconnecting";
  activeBehavior: string | null;
}

export function initialState(): PanelState {
  return {
    power: false,
    effector: "right",
    mode: "position",
    lease: "observer",
    connection: "reconnecting",
    activeBehavior: null,
  };
}

/** The command a press emits, given the current selection. */
export function payloadFor(c: Control, s: PanelState): CommandPayload | null {
  switch (c.id) {
    case "power":
      return { kind: "power", action: s.power ? "off" : "on" };
    case "select_effector":
      return { kind: "select", effector: c.effector };
    case "select_mode":
      return { kind: "select", mode: c.mode };
    case "delta":
      return { kind: "delta", effector: s.effector, mode: s.mode, axis: c.axis, dir: c.dir };
    case "gripper":
      return { kind: "gripper", effector: s.effector, action: c.open ? "open" : "close" };
    case "behavior":
      return { kind: "behavior", name: c.name };
    case "stop":
      return { kind: "stop" };
    case "lease":
      return null;
  }
}

interface Pending {
  key: string;
  control: Control;
}

export interface Notice {
  kind: "rejected" | "info";
  text: string;
}

export class Panel {
  state: PanelState = initialState();
  notices: Notice[] = [];
  private seq = 0;
  private pending = new Map<number, Pending>();
  private readonly clock: () => number;

  constructor(clock: () => number = () => Date.now() / 1000) {
    this.clock = clock;
  }

  /** Whether pressing `c` would emit anything right now. */
  enabled(c: Control): boolean {
    const s = this.state;
    if (s.connection !== "connected") return false;
    if (c.id === "lease") return true;
    if (s.lease !== "held") return false;
    const key = controlKey(c);
    for (const p of this.pending.values()) if (p.key === key) return false;
    if (c.id === "power") return true;
    if (!s.power) return false;
    if (c.id === "behavior" && s.activeBehavior !== null) return false;
    if (c.id === "select_effector") return c.effector !== s.effector;
    if (c.id === "select_mode") return c.mode !== s.mode;
    return true;
  }

  /** Handle one press. Returns the envelope to send, or null when gated. */
  press(c: Control): Envelope | null {
    if (!this.enabled(c)) return null;
    this.seq += 1;
    if (c.id === "lease") {
      return leaseEnvelope(this.seq, this.clock(), this.state.lease === "held" ? "release" : "request");
    }
    const payload = payloadFor(c, this.state);
    if (payload === null) return null;
    this.pending.set(this.seq, { key: controlKey(c), control: c });
    return commandEnvelope(this.seq, this.clock(), payload);
  }

  isPending(c: Control): boolean {
    const key = controlKey(c);
    for (const p of this.pending.values()) if (p.key === key) return true;
    return false;
  }

  setConnection(connected: boolean): void {
    this.state.connection = connected ? "connected" : "reconnecting";
    if (!connected) {
      // Nothing sent on the old socket will be acknowledged.
      this.pending.clear();
      this.state.lease = "observer";
    }
  }

  receive(env: Envelope): void {
    switch (env.type) {
      case "ack":
        this.onAck(env.payload as AckPayload);
        break;
      case "event":
        this.onEvent(env.payload as RobotEvent);
        break;
      case "lease": {
        const lease = env.payload as LeasePayload;
        this.state.lease = lease.role === "operator" ? "held" : "observer";
        this.state.power = lease.powered;
        break;
      }
      default:
        break;
    }
  }

  private onAck(ack: AckPayload): void {
    const p = this.pending.get(ack.of_seq);
    if (!p) return;
    this.pending.delete(ack.of_seq);
    if (ack.status === "rejected") {
      this.notices.push({ kind: "rejected", text: `${p.key} rejected: ${ack.reason ?? "unknown"}` });
      return;
    }
    const c = p.control;
    if (c.id === "select_effector") this.state.effector = c.effector;
    if (c.id === "select_mode") this.state.mode = c.mode;
    if (c.id === "behavior") this.state.activeBehavior = c.name;
  }

  private onEvent(ev: RobotEvent): void {
    switch (ev.event) {
      case "power":
        this.state.power = ev.on;
        if (!ev.on) this.state.activeBehavior = null;
        break;
      case "behavior_started":
        this.state.activeBehavior = ev.name;
        break;
      case "behavior_complete":
      case "behavior_stopped":
        this.state.activeBehavior = null;
        break;
      case "command_rejected":
        this.notices.push({ kind: "rejected", text: `command ${ev.of_seq} rejected: ${ev.reason}` });
        break;
      default:
        break;
    }
  }
}
