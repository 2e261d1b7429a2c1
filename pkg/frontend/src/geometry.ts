// Denormalization of server payload coordinates into canvas pixels.
// This is the only arithmetic the client performs: it never re-derives
// projections or filter results.

export interface PixelMarker {
  u: number;      // base point, pixels
  v: number;
  left: number;   // context-box rectangle, pixels
  top: number;
  width: number;
  height: number;
}

export function denormalizeMarker(
  box: [number, number, number, number],
  imageWidth: number,
  imageHeight: number,
): PixelMarker {
  const [cx, cy, w, h] = box;
  return {
    u: cx * imageWidth,
    v: cy * imageHeight,
    left: (cx - w / 2) * imageWidth,
    top: (cy - h / 2) * imageHeight,
    width: w * imageWidth,
    height: h * imageHeight,
  };
}

export function normalizeCenter(
  u: number,
  v: number,
  imageWidth: number,
  imageHeight: number,
): [number, number] {
  return [u / imageWidth, v / imageHeight];
}

export function insideUnitBox(center: [number, number]): boolean {
  const [u, v] = center;
  return u >= 0 && u <= 1 && v >= 0 && v <= 1;
}

export function hitTest(
  markers: PixelMarker[],
  u: number,
  v: number,
  radiusPx = 14,
): number | null {
  let best: number | null = null;
  let bestD = radiusPx;
  markers.forEach((m, i) => {
    const d = Math.hypot(m.u - u, m.v - v);
    if (d <= bestD) {
      best = i;
      bestD = d;
    }
  });
  return best;
}
