// Page wiring: fetch the robot, keep a socket open, route presses and
// frames through the panel, redraw on a timer.

import { ChartBuffer } from "./chart.js";
import { Control, Panel, controlKey } from "./panel.js";
import { Envelope, TelemetryPayload, parseEnvelope } from "./protocol.js";
import { SceneModel, render } from "./scene.js";

interface RobotDoc {
  frames: string[];
  behaviors: string[];
  grippers: string[];
}

const panel = new Panel();
const chart = new ChartBuffer();
const scene: SceneModel = { frames: [], grippers: [], telemetry: null, receivedAt: null };
const buttons = new Map<string, { el: HTMLButtonElement; control: Control }>();
let socket: WebSocket | null = null;
let backoffMs = 500;

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function addButton(parent: HTMLElement, label: string, control: Control): void {
  const el = document.createElement("button");
  el.textContent = label;
  el.dataset.control = controlKey(control);
  el.addEventListener("click", () => send(panel.press(control)));
  parent.appendChild(el);
  buttons.set(controlKey(control), { el, control });
}

function send(env: Envelope | null): void {
  if (env && socket && socket.readyState === WebSocket.OPEN) socket.send(JSON.stringify(env));
  refresh();
}

function refresh(): void {
  const s = panel.state;
  for (const { el, control } of buttons.values()) {
    el.disabled = !panel.enabled(control);
    el.classList.toggle("pending", panel.isPending(control));
  }
  const selected = (k: string, on: boolean) => buttons.get(k)?.el.classList.toggle("selected", on);
  selected("effector:left", s.effector === "left");
  selected("effector:right", s.effector === "right");
  selected("mode:position", s.mode === "position");
  selected("mode:orientation", s.mode === "orientation");
  const power = buttons.get("power");
  if (power) power.el.textContent = s.power ? "Power off" : "Power on";
  const lease = buttons.get("lease");
  if (lease) lease.el.textContent = s.lease === "held" ? "Release control" : "Request control";
  $("connection").textContent = s.connection;
  $("connection").className = s.connection;
  $("lease-badge").textContent = s.lease === "held" ? "operator" : "observer";
  $("behavior-status").textContent = s.activeBehavior ?? "idle";
  const notices = $("notices");
  while (panel.notices.length > 0) {
    const n = panel.notices.shift()!;
    const item = document.createElement("div");
    item.className = `toast ${n.kind}`;
    item.textContent = n.text;
    notices.prepend(item);
    setTimeout(() => item.remove(), 5000);
  }
}

function onTelemetry(t: TelemetryPayload): void {
  scene.telemetry = t;
  scene.receivedAt = Date.now();
  const palm = t.effectors[`${panel.state.effector}_palm`];
  if (palm) chart.push(t.sample_t, palm.p.slice());
}

function drawChart(ctx: CanvasRenderingContext2D): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  const data = chart.samples();
  if (data.length < 2) return;
  const t0 = data[0].t;
  const span = Math.max(data[data.length - 1].t - t0, 1e-6);
  const colors = ["#c53030", "#2f855a", "#2b6cb0"];
  for (let ch = 0; ch < 3; ch++) {
    let lo = Infinity;
    let hi = -Infinity;
    for (const s of data) {
      lo = Math.min(lo, s.values[ch]);
      hi = Math.max(hi, s.values[ch]);
    }
    const range = Math.max(hi - lo, 0.01);
    const band = height / 3;
    ctx.strokeStyle = colors[ch];
    ctx.beginPath();
    data.forEach((s, i) => {
      const x = ((s.t - t0) / span) * width;
      const y = band * (ch + 1) - ((s.values[ch] - lo) / range) * (band - 6) - 3;
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
    ctx.fillStyle = colors[ch];
    ctx.fillText(`${"xyz"[ch]} ${data[data.length - 1].values[ch].toFixed(3)} m`, 4, band * ch + 12);
  }
}

function connect(): void {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  const ws = new WebSocket(`${proto}://${location.host}/ws`);
  socket = ws;
  ws.onopen = () => {
    backoffMs = 500;
    panel.setConnection(true);
    refresh();
  };
  ws.onmessage = (msg) => {
    const env = parseEnvelope(String(msg.data));
    if (!env) return;
    if (env.type === "telemetry") onTelemetry(env.payload as TelemetryPayload);
    panel.receive(env);
    if (env.type !== "telemetry") refresh();
  };
  ws.onclose = () => {
    panel.setConnection(false);
    refresh();
    setTimeout(connect, backoffMs);
    backoffMs = Math.min(backoffMs * 2, 8000);
  };
}

async function loadRobot(): Promise<RobotDoc> {
  for (;;) {
    try {
      const res = await fetch("/api/robot");
      if (res.ok) return (await res.json()) as RobotDoc;
    } catch {
      // Server not up yet.
    }
    $("connection").textContent = "reconnecting";
    await new Promise((r) => setTimeout(r, backoffMs));
    backoffMs = Math.min(backoffMs * 2, 8000);
  }
}

async function start(): Promise<void> {
  const robot = await loadRobot();
  scene.frames = robot.frames;
  scene.grippers = robot.grippers;
  addButton($("power-controls"), "Power on", { id: "power" });
  addButton($("power-controls"), "Request control", { id: "lease" });
  addButton($("select-controls"), "Left", { id: "select_effector", effector: "left" });
  addButton($("select-controls"), "Right", { id: "select_effector", effector: "right" });
  addButton($("select-controls"), "Position", { id: "select_mode", mode: "position" });
  addButton($("select-controls"), "Orientation", { id: "select_mode", mode: "orientation" });
  for (const axis of ["x", "y", "z"] as const) {
    addButton($("delta-controls"), `+${axis}`, { id: "delta", axis, dir: 1 });
    addButton($("delta-controls"), `-${axis}`, { id: "delta", axis, dir: -1 });
  }
  addButton($("gripper-controls"), "Open gripper", { id: "gripper", open: true });
  addButton($("gripper-controls"), "Close gripper", { id: "gripper", open: false });
  for (const name of robot.behaviors) addButton($("behavior-controls"), name, { id: "behavior", name });
  addButton($("behavior-controls"), "Stop", { id: "stop" });
  refresh();
  connect();
  const view = ($("view") as HTMLCanvasElement).getContext("2d")!;
  const plot = ($("chart") as HTMLCanvasElement).getContext("2d")!;
  setInterval(() => {
    render(view, scene, Date.now());
    drawChart(plot);
  }, 50);
}

void start();
