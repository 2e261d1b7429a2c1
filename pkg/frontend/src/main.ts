// Review tool wiring: frame list, canvas, keyboard and drag interaction.
//
// Keyboard: a = accept, r = reject, drag a marker = adjust,
//           j/k or arrows = select marker, n/p = next/previous frame.

import { ApiError, ReviewApi } from "./api.js";
import { frameMarkers, drawFrame } from "./render.js";
import { hitTest, insideUnitBox, normalizeCenter } from "./geometry.js";
import { ReviewState } from "./state.js";
import type { DecisionRecord, FrameSummary, Verdict } from "./types.js";

const api = new ReviewApi("");
const state = new ReviewState();

const canvas = document.getElementById("frame") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const listEl = document.getElementById("frames")!;
const statusEl = document.getElementById("status")!;
const badgeEl = document.getElementById("badge")!;

let summaries: FrameSummary[] = [];
let frameIndex = 0;
let image: HTMLImageElement | null = null;
let drag: { index: number; u: number; v: number } | null = null;

function setStatus(text: string, isError = false): void {
  statusEl.textContent = text;
  statusEl.className = isError ? "error" : "";
}

function redraw(): void {
  const detail = state.frame;
  if (!detail) {
    return;
  }
  const decisions = detail.annotations.map(
    (a) => state.decisionFor(detail.image_id, a.index));
  drawFrame(ctx, image, detail, decisions, state.selected);
  if (drag) {
    ctx.strokeStyle = "#ffffff";
    ctx.strokeRect(drag.u - 6, drag.v - 6, 12, 12);
  }
  const [done, total] = state.progress(detail);
  badgeEl.textContent = total === 0 ? "nothing to review"
    : `${detail.image_id} — ${done}/${total} reviewed`;
}

function renderList(): void {
  listEl.innerHTML = "";
  summaries.forEach((s, i) => {
    const li = document.createElement("li");
    li.textContent = `${s.image_id} (${s.annotations}) ${s.state}`;
    li.className = i === frameIndex ? "current" : "";
    li.addEventListener("click", () => {
      void openFrame(i);
    });
    listEl.appendChild(li);
  });
}

async function openFrame(i: number): Promise<void> {
  frameIndex = Math.max(0, Math.min(i, summaries.length - 1));
  const summary = summaries[frameIndex];
  const detail = await api.frame(summary.image_id);
  state.loadFrame(detail);
  canvas.width = detail.width;
  canvas.height = detail.height;
  image = null;
  const img = new Image();
  img.onload = () => {
    image = img;
    redraw();
  };
  img.onerror = () => {
    image = null;  // placeholder background; retry from the status line
    setStatus("image failed to load — click frame to retry", true);
    redraw();
  };
  img.src = api.imageUrl(summary.image_id);
  renderList();
  redraw();
}

async function submit(verdict: Verdict,
                      adjusted?: [number, number]): Promise<void> {
  const detail = state.frame;
  if (!detail || detail.annotations.length === 0) {
    return;
  }
  const index = detail.annotations[state.selected].index;
  const { prev } = state.applyLocal(detail.image_id, index, verdict, adjusted);
  redraw();  // optimistic
  try {
    const ack = await api.postDecision({
      image_id: detail.image_id,
      annotation_index: index,
      verdict,
      adjusted_center: adjusted,
      reviewer: "ui",
    });
    summaries[frameIndex].state = ack.frame_state;
    state.advance();
    setStatus(`${verdict} #${index} acknowledged`);
  } catch (err) {
    state.rollback(detail.image_id, index, prev as DecisionRecord | null);
    const message = err instanceof ApiError
      ? `server rejected: ${err.message}` : "server unreachable";
    setStatus(message, true);
  }
  renderList();
  redraw();
}

function canvasPoint(event: MouseEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  return [(event.clientX - rect.left) * (canvas.width / rect.width),
          (event.clientY - rect.top) * (canvas.height / rect.height)];
}

canvas.addEventListener("mousedown", (event) => {
  const detail = state.frame;
  if (!detail) {
    return;
  }
  const [u, v] = canvasPoint(event);
  const hit = hitTest(frameMarkers(detail), u, v);
  if (hit !== null) {
    state.select(hit);
    drag = { index: hit, u, v };
    redraw();
  }
});

canvas.addEventListener("mousemove", (event) => {
  if (!drag) {
    return;
  }
  [drag.u, drag.v] = canvasPoint(event);
  redraw();
});

canvas.addEventListener("mouseup", () => {
  const detail = state.frame;
  if (!drag || !detail) {
    drag = null;
    return;
  }
  const moved = Math.hypot(drag.u - frameMarkers(detail)[drag.index].u,
                           drag.v - frameMarkers(detail)[drag.index].v);
  const center = normalizeCenter(drag.u, drag.v, detail.width, detail.height);
  const { index } = drag;
  drag = null;
  if (moved < 3) {
    redraw();
    return;  // a click, not an adjustment
  }
  if (!insideUnitBox(center)) {
    setStatus("adjusted center must stay inside the image", true);
    redraw();
    return;  // blocked client-side before any POST
  }
  state.select(index);
  void submit("adjust", center);
});

document.addEventListener("keydown", (event) => {
  switch (event.key) {
    case "a":
      void submit("accept");
      break;
    case "r":
      void submit("reject");
      break;
    case "j":
    case "ArrowDown":
    case "ArrowRight":
      state.advance();
      redraw();
      break;
    case "k":
    case "ArrowUp":
    case "ArrowLeft":
      state.select(state.selected - 1);
      redraw();
      break;
    case "n":
      void openFrame(frameIndex + 1);
      break;
    case "p":
      void openFrame(frameIndex - 1);
      break;
  }
});

async function start(): Promise<void> {
  try {
    const page = await api.frames();
    summaries = page.frames;
    renderList();
    if (summaries.length > 0) {
      await openFrame(0);
    }
    setStatus(`${page.total} frames loaded`);
  } catch {
    setStatus("cannot reach the review service", true);
  }
}

void start();
