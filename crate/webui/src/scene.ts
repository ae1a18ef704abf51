// Telemetry-driven robot drawing. Positions come straight from telemetry;
// the only geometry here is projection onto the canvas.

import { TelemetryPayload } from "./protocol.js";

/** Telemetry older than this dims the scene. */
export const STALE_MS = 2000;

export const CHAINS: string[][] = [
  ["base", "torso", "head"],
  ["torso", "right_shoulder", "right_elbow", "right_wrist", "right_palm", "right_gripper"],
  ["torso", "left_shoulder", "left_elbow", "left_wrist", "left_palm", "left_gripper"],
];

export interface SceneModel {
  frames: string[];
  grippers: string[];
  telemetry: TelemetryPayload | null;
  receivedAt: number | null;
}

export function isStale(scene: SceneModel, now: number): boolean {
  return scene.receivedAt === null || now - scene.receivedAt > STALE_MS;
}

/** Oblique front view: y to the left, z up, x receding. */
export function project(p: [number, number, number], width: number, height: number): [number, number] {
  const scale = Math.min(width, height) / 1.8;
  const sx = width / 2 - p[1] * scale + p[0] * scale * 0.35;
  const sy = height * 0.95 - p[2] * scale + p[0] * scale * 0.2;
  return [sx, sy];
}

/** Line segments to draw: consecutive chain frames both present. */
export function segments(t: TelemetryPayload): Array<[[number, number, number], [number, number, number]]> {
  const out: Array<[[number, number, number], [number, number, number]]> = [];
  for (const chain of CHAINS) {
    for (let i = 1; i < chain.length; i++) {
      const a = t.effectors[chain[i - 1]];
      const b = t.effectors[chain[i]];
      if (a && b) out.push([a.p, b.p]);
    }
  }
  return out;
}

export function render(ctx: CanvasRenderingContext2D, scene: SceneModel, now: number): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  const t = scene.telemetry;
  if (!t) {
    ctx.fillStyle = "#888";
    ctx.fillText("waiting for telemetry", 10, 20);
    return;
  }
  ctx.globalAlpha = isStale(scene, now) ? 0.35 : 1.0;
  ctx.lineWidth = 4;
  ctx.strokeStyle = "#2b6cb0";
  for (const [a, b] of segments(t)) {
    const [ax, ay] = project(a, width, height);
    const [bx, by] = project(b, width, height);
    ctx.beginPath();
    ctx.moveTo(ax, ay);
    ctx.lineTo(bx, by);
    ctx.stroke();
  }
  for (const [name, aperture] of Object.entries(t.grippers)) {
    const frame = t.effectors[`${name}_gripper`] ?? t.effectors[`${name}_palm`];
    if (!frame) continue;
    const [x, y] = project(frame.p, width, height);
    ctx.beginPath();
    ctx.strokeStyle = "#c05621";
    ctx.lineWidth = 2;
    ctx.arc(x, y, 3 + 9 * aperture, 0, 2 * Math.PI);
    ctx.stroke();
  }
  if (t.object) {
    const [x, y] = project(t.object, width, height);
    ctx.fillStyle = t.attached ? "#2f855a" : "#718096";
    ctx.fillRect(x - 6, y - 12, 12, 24);
  }
  ctx.globalAlpha = 1.0;
  if (isStale(scene, now)) {
    ctx.fillStyle = "#c53030";
    ctx.fillText("telemetry stale", 10, 20);
  }
}
