// Bird's-eye-view projection math and canvas drawing for one scene.
//
// World frame: x right, y up, meters. Canvas frame: x right, y down,
// pixels. Points are shaded by height; annotations draw in purple and
// the proposal under review in red.

import type { BoxGeometry, ProposalPacket } from "./api.js";

export const ANNOTATION_COLOR = "#b44bd6";
export const PROPOSAL_COLOR = "#ff3b30";

export interface Viewport {
  centerX: number; // world coords at the canvas center
  centerY: number;
  scale: number; // pixels per meter
  width: number; // canvas size in pixels
  height: number;
}

export function fitViewport(
  cx: number,
  cy: number,
  radius: number,
  width: number,
  height: number,
  margin = 0.95,
): Viewport {
  const scale = (margin * Math.min(width, height)) / (2 * radius);
  return { centerX: cx, centerY: cy, scale, width, height };
}

export function worldToCanvas(vp: Viewport, x: number, y: number): [number, number] {
  return [
    vp.width / 2 + (x - vp.centerX) * vp.scale,
    vp.height / 2 - (y - vp.centerY) * vp.scale,
  ];
}

export function canvasToWorld(vp: Viewport, px: number, py: number): [number, number] {
  return [
    vp.centerX + (px - vp.width / 2) / vp.scale,
    vp.centerY - (py - vp.height / 2) / vp.scale,
  ];
}

export function zoomViewport(vp: Viewport, factor: number, anchorPx?: [number, number]): Viewport {
  const anchor = anchorPx ?? [vp.width / 2, vp.height / 2];
  const [wx, wy] = canvasToWorld(vp, anchor[0], anchor[1]);
  const scale = vp.scale * factor;
  // Keep the anchor's world point under the same pixel.
  const centerX = wx - (anchor[0] - vp.width / 2) / scale;
  const centerY = wy + (anchor[1] - vp.height / 2) / scale;
  return { ...vp, scale, centerX, centerY };
}

export function panViewport(vp: Viewport, dxPx: number, dyPx: number): Viewport {
  return {
    ...vp,
    centerX: vp.centerX - dxPx / vp.scale,
    centerY: vp.centerY + dyPx / vp.scale,
  };
}

/** Footprint corners under yaw rotation, counter-clockwise. */
export function boxCorners(box: BoxGeometry): [number, number][] {
  const c = Math.cos(box.yaw);
  const s = Math.sin(box.yaw);
  const dx = box.l / 2;
  const dy = box.w / 2;
  const local: [number, number][] = [
    [dx, dy],
    [-dx, dy],
    [-dx, -dy],
    [dx, -dy],
  ];
  return local.map(([px, py]) => [box.cx + c * px - s * py, box.cy + s * px + c * py]);
}

export function polygonArea(corners: [number, number][]): number {
  let acc = 0;
  for (let i = 0; i < corners.length; i++) {
    const [x0, y0] = corners[i];
    const [x1, y1] = corners[(i + 1) % corners.length];
    acc += x0 * y1 - x1 * y0;
  }
  return Math.abs(acc) / 2;
}

/** Height shading from deep blue (low) to warm yellow (high). */
export function heightColor(z: number, zMin: number, zMax: number): string {
  const span = zMax - zMin;
  const t = span > 0 ? Math.min(Math.max((z - zMin) / span, 0), 1) : 0.5;
  const r = Math.round(40 + 215 * t);
  const g = Math.round(70 + 160 * t);
  const b = Math.round(220 - 160 * t);
  return `rgb(${r},${g},${b})`;
}

export interface SceneOptions {
  pointRadius?: number;
  background?: string;
}

// The subset of CanvasRenderingContext2D the renderer touches; tests can
// substitute a recording stub.
export interface DrawingContext {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  fillRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
}

function strokePolygon(ctx: DrawingContext, vp: Viewport, corners: [number, number][]) {
  ctx.beginPath();
  corners.forEach(([x, y], i) => {
    const [px, py] = worldToCanvas(vp, x, y);
    if (i === 0) ctx.moveTo(px, py);
    else ctx.lineTo(px, py);
  });
  ctx.closePath();
  ctx.stroke();
}

/** Heading tick from the box center toward +x in the box frame. */
function strokeHeading(ctx: DrawingContext, vp: Viewport, box: BoxGeometry) {
  const [cx, cy] = worldToCanvas(vp, box.cx, box.cy);
  const [hx, hy] = worldToCanvas(
    vp,
    box.cx + (Math.cos(box.yaw) * box.l) / 2,
    box.cy + (Math.sin(box.yaw) * box.l) / 2,
  );
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(hx, hy);
  ctx.stroke();
}

export function renderScene(
  ctx: DrawingContext,
  packet: ProposalPacket,
  vp: Viewport,
  options: SceneOptions = {},
): void {
  ctx.fillStyle = options.background ?? "#101418";
  ctx.fillRect(0, 0, vp.width, vp.height);

  const zs = packet.points.map((p) => p[2]);
  const zMin = zs.length ? Math.min(...zs) : 0;
  const zMax = zs.length ? Math.max(...zs) : 1;
  const radius = options.pointRadius ?? 1.6;
  for (const p of packet.points) {
    const [px, py] = worldToCanvas(vp, p[0], p[1]);
    if (px < -4 || py < -4 || px > vp.width + 4 || py > vp.height + 4) continue;
    ctx.fillStyle = heightColor(p[2], zMin, zMax);
    ctx.beginPath();
    ctx.arc(px, py, radius, 0, 2 * Math.PI);
    ctx.fill();
  }

  ctx.lineWidth = 2;
  ctx.strokeStyle = ANNOTATION_COLOR;
  for (const gt of packet.ground_truth) {
    strokePolygon(ctx, vp, boxCorners(gt));
    strokeHeading(ctx, vp, gt);
  }

  ctx.lineWidth = 2.5;
  ctx.strokeStyle = PROPOSAL_COLOR;
  strokePolygon(ctx, vp, boxCorners(packet.box));
  strokeHeading(ctx, vp, packet.box);
}
