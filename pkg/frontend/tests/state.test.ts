import { describe, expect, it } from "vitest";

import { ReviewState, decisionKey } from "../src/state.js";
import type { FrameDetail } from "../src/types.js";

function frame(imageId: string, n: number): FrameDetail {
  return {
    image_id: imageId,
    width: 1280,
    height: 720,
    state: "unreviewed",
    annotations: Array.from({ length: n }, (_, i) => ({
      index: i,
      box: [0.1 + 0.2 * i, 0.5, 0.1, 0.1] as [number, number, number, number],
      center: [0.1 + 0.2 * i, 0.5] as [number, number],
      audit: { decision: "kept" },
      decision: null,
    })),
  };
}

describe("ReviewState", () => {
  it("selection wraps and advances", () => {
    const s = new ReviewState();
    s.loadFrame(frame("f", 3));
    expect(s.selected).toBe(0);
    s.advance();
    expect(s.selected).toBe(1);
    s.select(5);
    expect(s.selected).toBe(2);
    s.select(-1);
    expect(s.selected).toBe(2);
  });

  it("optimistic apply and rollback restore the previous value", () => {
    const s = new ReviewState();
    s.loadFrame(frame("f", 2));
    const first = s.applyLocal("f", 0, "accept");
    expect(first.prev).toBeNull();
    const second = s.applyLocal("f", 0, "reject");
    expect(second.prev).toEqual({ verdict: "accept" });
    s.rollback("f", 0, second.prev);
    expect(s.decisionFor("f", 0)).toEqual({ verdict: "accept" });
    s.rollback("f", 0, first.prev);
    expect(s.decisionFor("f", 0)).toBeNull();
  });

  it("seeds state from server-known decisions on load", () => {
    const f = frame("f", 2);
    f.annotations[1].decision = { verdict: "adjust",
                                  adjusted_center: [0.5, 0.9] };
    const s = new ReviewState();
    s.loadFrame(f);
    expect(s.decisionFor("f", 1)?.adjusted_center).toEqual([0.5, 0.9]);
  });

  it("tracks progress per frame", () => {
    const s = new ReviewState();
    const f = frame("f", 3);
    s.loadFrame(f);
    expect(s.progress(f)).toEqual([0, 3]);
    s.applyLocal("f", 1, "accept");
    expect(s.progress(f)).toEqual([1, 3]);
  });

  it("uses a collision-free key", () => {
    expect(decisionKey("a", 11)).not.toBe(decisionKey("a1", 1));
  });
});
