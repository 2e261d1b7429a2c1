// Canvas rendering of one frame: the image plus a marker (center cross and
// context-box outline) per annotation.  Colors follow the overlay
// convention: green for kept bases, red for flat-ground fallbacks, with the
// review verdict recolored on top.

import { denormalizeMarker, type PixelMarker } from "./geometry.js";
import type { DecisionRecord, FrameDetail } from "./types.js";

export const AUDIT_COLORS: Record<string, string> = {
  kept: "#35c14f",
  no_ground: "#e03131",
};

export const VERDICT_COLORS: Record<string, string> = {
  accept: "#2bd46a",
  reject: "#ff5252",
  adjust: "#27c4d4",
};

export interface MarkerStyle {
  color: string;
  crossed: boolean;   // rejected markers are struck through
  moved: [number, number] | null;  // adjusted center, pixels
}

export function markerStyle(auditDecision: string | null,
                            decision: DecisionRecord | null,
                            imageWidth: number,
                            imageHeight: number): MarkerStyle {
  let color = AUDIT_COLORS[auditDecision ?? ""] ?? "#f2a33c";
  let crossed = false;
  let moved: [number, number] | null = null;
  if (decision) {
    color = VERDICT_COLORS[decision.verdict];
    crossed = decision.verdict === "reject";
    if (decision.verdict === "adjust" && decision.adjusted_center) {
      moved = [decision.adjusted_center[0] * imageWidth,
               decision.adjusted_center[1] * imageHeight];
    }
  }
  return { color, crossed, moved };
}

export function frameMarkers(detail: FrameDetail): PixelMarker[] {
  return detail.annotations.map((a) =>
    denormalizeMarker(a.box, detail.width, detail.height));
}

export function drawFrame(ctx: CanvasRenderingContext2D,
                          image: CanvasImageSource | null,
                          detail: FrameDetail,
                          decisions: (DecisionRecord | null)[],
                          selected: number): void {
  ctx.clearRect(0, 0, detail.width, detail.height);
  if (image) {
    ctx.drawImage(image, 0, 0, detail.width, detail.height);
  } else {
    ctx.fillStyle = "#202228";
    ctx.fillRect(0, 0, detail.width, detail.height);
  }
  const markers = frameMarkers(detail);
  detail.annotations.forEach((ann, i) => {
    const style = markerStyle(ann.audit?.decision ?? null, decisions[i],
                              detail.width, detail.height);
    const m = markers[i];
    ctx.lineWidth = i === selected ? 3 : 1.5;
    ctx.strokeStyle = style.color;
    ctx.strokeRect(m.left, m.top, m.width, m.height);
    const [u, v] = style.moved ?? [m.u, m.v];
    drawCross(ctx, u, v, style.color, i === selected ? 12 : 9);
    if (style.moved) {
      ctx.setLineDash([4, 4]);
      ctx.beginPath();
      ctx.moveTo(m.u, m.v);
      ctx.lineTo(u, v);
      ctx.stroke();
      ctx.setLineDash([]);
    }
    if (style.crossed) {
      ctx.beginPath();
      ctx.moveTo(m.u - 10, m.v - 10);
      ctx.lineTo(m.u + 10, m.v + 10);
      ctx.stroke();
    }
  });
}

function drawCross(ctx: CanvasRenderingContext2D, u: number, v: number,
                   color: string, size: number): void {
  ctx.strokeStyle = color;
  ctx.beginPath();
  ctx.moveTo(u - size, v);
  ctx.lineTo(u + size, v);
  ctx.moveTo(u, v - size);
  ctx.lineTo(u, v + size);
  ctx.stroke();
}
