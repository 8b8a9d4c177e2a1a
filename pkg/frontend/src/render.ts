/** Top-view workspace rendering. Geometry helpers are pure so they can be
 * unit-tested without a canvas. */
import type { StateFrame, Workspace } from "./types.js";

export interface CanvasPoint {
  cx: number;
  cy: number;
}

/** World (m, base at origin, x forward/right on screen, y up on screen)
 * -> canvas pixels. `extent` is the world half-width shown. */
export function worldToCanvas(
  x: number,
  y: number,
  size: number,
  extent = 0.6,
): CanvasPoint {
  const scale = size / (2 * extent);
  return { cx: size / 2 + x * scale, cy: size / 2 - y * scale };
}

/** Shoulder/elbow/end-effector positions of the two-link arm in world
 * coordinates, derived from the joint angles in a state frame. The link
 * lengths are recovered from the advertised workspace annulus. */
export function linkagePoints(
  frame: Pick<StateFrame, "joints" | "ee_pose" | "workspace">,
): { base: [number, number]; elbow: [number, number]; ee: [number, number] } {
  const { r_min, r_max } = frame.workspace;
  const l1 = (r_max + r_min) / 2;
  const s = frame.joints.shoulder;
  return {
    base: [0, 0],
    elbow: [l1 * Math.cos(s), l1 * Math.sin(s)],
    ee: [frame.ee_pose.x, frame.ee_pose.y],
  };
}

/** Sampled outline of the reachable region (annulus cut by the shoulder
 * limit), as a closed world-space polygon. */
export function workspaceOutline(ws: Workspace, samples = 64): Array<[number, number]> {
  const pts: Array<[number, number]> = [];
  const a0 = -ws.shoulder_limit;
  const a1 = ws.shoulder_limit;
  // generous outer sweep: shoulder limit plus the elbow's reach around it
  for (let i = 0; i <= samples; i++) {
    const a = a0 + ((a1 - a0) * i) / samples;
    pts.push([ws.r_max * Math.cos(a), ws.r_max * Math.sin(a)]);
  }
  if (ws.r_min > 1e-9) {
    for (let i = samples; i >= 0; i--) {
      const a = a0 + ((a1 - a0) * i) / samples;
      pts.push([ws.r_min * Math.cos(a), ws.r_min * Math.sin(a)]);
    }
  } else {
    pts.push([0, 0]);
  }
  return pts;
}

const OBJECT_COLORS: Record<string, string> = {
  banana: "#e6c229",
  coke_can: "#d62828",
  apple: "#6a994e",
};

export function objectColor(kind: string): string {
  return OBJECT_COLORS[kind] ?? "#888888";
}

/** Draw the whole top view onto a square canvas context. */
export function drawTopView(
  ctx: CanvasRenderingContext2D,
  frame: StateFrame,
  size: number,
): void {
  ctx.clearRect(0, 0, size, size);
  ctx.fillStyle = "#1d2330";
  ctx.fillRect(0, 0, size, size);

  // reachable region
  const outline = workspaceOutline(frame.workspace);
  ctx.beginPath();
  outline.forEach(([x, y], i) => {
    const p = worldToCanvas(x, y, size);
    if (i === 0) ctx.moveTo(p.cx, p.cy);
    else ctx.lineTo(p.cx, p.cy);
  });
  ctx.closePath();
  ctx.fillStyle = "#2a3447";
  ctx.fill();
  ctx.strokeStyle = "#47586f";
  ctx.stroke();

  // objects
  for (const o of frame.objects) {
    const p = worldToCanvas(o.x, o.y, size);
    const r = Math.max(4, (o.half_extents[0] * size) / 1.2);
    ctx.beginPath();
    ctx.arc(p.cx, p.cy, r, 0, 2 * Math.PI);
    ctx.fillStyle = objectColor(o.kind);
    ctx.fill();
    if (o.id === frame.attached_object) {
      ctx.strokeStyle = "#ffffff";
      ctx.lineWidth = 2;
      ctx.stroke();
      ctx.lineWidth = 1;
    }
    ctx.fillStyle = "#cfd8e3";
    ctx.font = "10px sans-serif";
    ctx.fillText(o.id, p.cx + r + 2, p.cy);
  }

  // linkage
  const { base, elbow, ee } = linkagePoints(frame);
  const pb = worldToCanvas(base[0], base[1], size);
  const pe = worldToCanvas(elbow[0], elbow[1], size);
  const pt = worldToCanvas(ee[0], ee[1], size);
  ctx.strokeStyle = "#9fc4ff";
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.moveTo(pb.cx, pb.cy);
  ctx.lineTo(pe.cx, pe.cy);
  ctx.lineTo(pt.cx, pt.cy);
  ctx.stroke();
  ctx.lineWidth = 1;
  for (const p of [pb, pe]) {
    ctx.beginPath();
    ctx.arc(p.cx, p.cy, 4, 0, 2 * Math.PI);
    ctx.fillStyle = "#dbe7ff";
    ctx.fill();
  }
  // gripper: two jaws perpendicular to wrist yaw, spacing = opening
  const yaw = frame.ee_pose.yaw;
  const half = frame.joints.gripper / 2;
  const nx = -Math.sin(yaw) * half;
  const ny = Math.cos(yaw) * half;
  const j1 = worldToCanvas(ee[0] + nx, ee[1] + ny, size);
  const j2 = worldToCanvas(ee[0] - nx, ee[1] - ny, size);
  ctx.strokeStyle = frame.attached_object ? "#7bf1a8" : "#ffd166";
  ctx.lineWidth = 2;
  for (const j of [j1, j2]) {
    ctx.beginPath();
    ctx.arc(j.cx, j.cy, 3, 0, 2 * Math.PI);
    ctx.stroke();
  }
  ctx.lineWidth = 1;
}
