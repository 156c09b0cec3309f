// Browser entry point: canvas scene, keyboard-driven verdicts, summary.

import type { Decision, ErrorKind, ProposalPacket } from "./api.js";
import { ApiError, ReviewApi } from "./api.js";
import {
  DECISION_KEYS,
  KIND_KEYS,
  ReviewSession,
  type SessionView,
} from "./queue.js";
import {
  fitViewport,
  panViewport,
  renderScene,
  zoomViewport,
  type Viewport,
} from "./scene.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("scene");
const ctx = canvas.getContext("2d");
if (!ctx) throw new Error("2d canvas context unavailable");

const api = new ReviewApi("");
const session = new ReviewSession(api);

let packet: ProposalPacket | null = null;
let viewport: Viewport | null = null;
let pendingKind: ErrorKind = "missing_label";

function resizeCanvas(): void {
  const rect = canvas.parentElement!.getBoundingClientRect();
  canvas.width = rect.width;
  canvas.height = Math.max(rect.height, 320);
  if (packet) {
    viewport = fitViewport(
      packet.crop_center[0],
      packet.crop_center[1],
      packet.crop_radius,
      canvas.width,
      canvas.height,
    );
  }
  draw();
}

function draw(): void {
  if (!ctx) return;
  if (!packet || !viewport) {
    ctx.fillStyle = "#101418";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    return;
  }
  renderScene(ctx, packet, viewport);
}

function showBanner(text: string, isError = false): void {
  const banner = el<HTMLDivElement>("banner");
  banner.textContent = text;
  banner.className = isError ? "banner error" : "banner";
  banner.style.display = text ? "block" : "none";
}

function applyView(view: SessionView): void {
  packet = view.packet;
  el<HTMLSpanElement>("summary").textContent = view.summaryText;
  el<HTMLSpanElement>("progress").textContent =
    `${view.total - view.remaining}/${view.total} reviewed`;
  const info = el<HTMLDivElement>("proposal-info");
  const camera = el<HTMLImageElement>("camera");
  if (packet) {
    info.innerHTML = [
      `<b>rank ${packet.rank}</b> (${packet.method})`,
      `frame ${packet.frame_id}, box ${packet.box_id}`,
      `class ${packet.class_name}`,
      `ranking key ${packet.key.toFixed(3)}`,
      `overlap with current ground truth ${packet.iou.toFixed(3)}`,
    ].join("<br>");
    viewport = fitViewport(
      packet.crop_center[0],
      packet.crop_center[1],
      packet.crop_radius,
      canvas.width,
      canvas.height,
    );
    if (packet.camera_image) {
      camera.src = packet.camera_image;
      camera.style.display = "block";
    } else {
      camera.style.display = "none";
    }
    showBanner("");
  } else {
    info.textContent = view.total === 0 ? "no proposals to review" : "nothing left to review";
    camera.style.display = "none";
  }
  draw();
}

async function guard(action: () => Promise<SessionView>): Promise<void> {
  try {
    applyView(await action());
  } catch (err) {
    const detail = err instanceof ApiError ? `${err.status}: ${err.message}` : String(err);
    showBanner(`request failed (${detail}); nothing was lost, retry when ready`, true);
  }
}

function submit(decision: Decision): void {
  const kind: ErrorKind = decision === "annotation_error" ? pendingKind : "none";
  void guard(() => session.submit(decision, kind));
}

function selectKind(kind: ErrorKind): void {
  pendingKind = kind;
  document.querySelectorAll<HTMLButtonElement>("[data-kind]").forEach((btn) => {
    btn.classList.toggle("active", btn.dataset.kind === kind);
  });
}

window.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement) return;
  const decision = DECISION_KEYS[event.key];
  if (decision) {
    submit(decision);
    return;
  }
  const kind = KIND_KEYS[event.key];
  if (kind) selectKind(kind);
});

document.querySelectorAll<HTMLButtonElement>("[data-decision]").forEach((btn) => {
  btn.addEventListener("click", () => submit(btn.dataset.decision as Decision));
});
document.querySelectorAll<HTMLButtonElement>("[data-kind]").forEach((btn) => {
  btn.addEventListener("click", () => selectKind(btn.dataset.kind as ErrorKind));
});

canvas.addEventListener("wheel", (event) => {
  if (!viewport) return;
  event.preventDefault();
  const factor = event.deltaY < 0 ? 1.2 : 1 / 1.2;
  const rect = canvas.getBoundingClientRect();
  viewport = zoomViewport(viewport, factor, [
    event.clientX - rect.left,
    event.clientY - rect.top,
  ]);
  draw();
});

let dragging: [number, number] | null = null;
canvas.addEventListener("mousedown", (event) => {
  dragging = [event.clientX, event.clientY];
});
window.addEventListener("mouseup", () => {
  dragging = null;
});
window.addEventListener("mousemove", (event) => {
  if (!dragging || !viewport) return;
  viewport = panViewport(viewport, event.clientX - dragging[0], event.clientY - dragging[1]);
  dragging = [event.clientX, event.clientY];
  draw();
});

window.addEventListener("resize", resizeCanvas);

selectKind("missing_label");
resizeCanvas();
void guard(() => session.start());
