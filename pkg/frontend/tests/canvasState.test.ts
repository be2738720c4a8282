import { describe, expect, it } from "vitest";

import {
  addCharacter,
  addDialog,
  characterBoxAtDrop,
  clampBox,
  composeSpec,
  flagBoxFromFieldPath,
  moveBox,
  newCanvasState,
  overlapWarnings,
  stateFromSpec,
  type CanvasState,
} from "../src/canvasState.js";
import type { BBox } from "../src/types.js";
import { validateSpec } from "../src/validate.js";

/** Deterministic xorshift so the 50 randomized states are reproducible. */
function rng(seed: number): () => number {
  let s = seed >>> 0 || 1;
  return () => {
    s ^= s << 13;
    s ^= s >>> 17;
    s ^= s << 5;
    s >>>= 0;
    return s / 0xffffffff;
  };
}

function randomState(rand: () => number): CanvasState {
  const sizes: [number, number][] = [
    [128, 128],
    [128, 192],
    [192, 128],
    [256, 256],
  ];
  const [w, h] = sizes[Math.floor(rand() * sizes.length)];
  let state = newCanvasState(w, h);
  state = {
    ...state,
    caption: `scene ${Math.floor(rand() * 1e6)}`,
    alpha: Math.round(rand() * 20) / 10,
    beta: Math.round(rand() * 10) / 10,
    seed: Math.floor(rand() * 100000),
    steps: 1 + Math.floor(rand() * 99),
  };
  const nChars = Math.floor(rand() * 5);
  for (let i = 0; i < nChars; i++) {
    const x0 = Math.floor(rand() * (w - 8));
    const y0 = Math.floor(rand() * (h - 8));
    const box: BBox = [x0, y0, x0 + 8 + Math.floor(rand() * (w - x0 - 8)), y0 + 8 + Math.floor(rand() * (h - y0 - 8))];
    state = addCharacter(state, { ref: `char_${i}`, bbox: clampBox(box, w, h) }, 4);
  }
  const nDialogs = Math.floor(rand() * 4);
  for (let i = 0; i < nDialogs; i++) {
    const x0 = Math.floor(rand() * (w - 8));
    const y0 = Math.floor(rand() * (h - 8));
    state = addDialog(state, [x0, y0, x0 + 8 + Math.floor(rand() * 40), y0 + 8 + Math.floor(rand() * 40)]);
  }
  return state;
}

describe("composeSpec round trip", () => {
  it("is lossless over 50 randomized states", () => {
    const rand = rng(20240809);
    for (let i = 0; i < 50; i++) {
      const state = randomState(rand);
      const spec = composeSpec(state);
      const back = stateFromSpec(spec);
      expect(back.width).toBe(state.width);
      expect(back.height).toBe(state.height);
      expect(back.caption).toBe(state.caption);
      expect(back.alpha).toBe(state.alpha);
      expect(back.beta).toBe(state.beta);
      expect(back.seed).toBe(state.seed);
      expect(back.steps).toBe(state.steps);
      expect(back.characters.map((c) => ({ ref: c.ref, bbox: c.bbox }))).toEqual(
        state.characters.map((c) => ({ ref: c.ref, bbox: c.bbox }))
      );
      expect(back.dialogs.map((d) => d.bbox)).toEqual(state.dialogs.map((d) => d.bbox));
      // and the spec document itself is stable under a second pass
      expect(composeSpec(back)).toEqual(spec);
    }
  });

  it("never emits a client-invalid spec from editor operations", () => {
    const rand = rng(7);
    for (let i = 0; i < 50; i++) {
      const spec = composeSpec(randomState(rand));
      expect(validateSpec(spec)).toEqual([]);
    }
  });
});

describe("box placement", () => {
  it("drag drop creates the quarter-area box centered at the drop point", () => {
    const state = newCanvasState(128, 128);
    const placed = characterBoxAtDrop(state, "hero", 64, 64);
    // quarter of 128x128 is 4096 px^2, square side 64, centered at (64, 64)
    expect(placed.bbox).toEqual([32, 32, 96, 96]);
    expect(placed.ref).toBe("hero");
  });

  it("drop near the edge clamps into the canvas", () => {
    const state = newCanvasState(128, 128);
    const placed = characterBoxAtDrop(state, "hero", 2, 3);
    const [x0, y0, x1, y1] = placed.bbox;
    expect(x0).toBeGreaterThanOrEqual(0);
    expect(y0).toBeGreaterThanOrEqual(0);
    expect(x1).toBeLessThanOrEqual(128);
    expect(y1).toBeLessThanOrEqual(128);
    expect(x1 - x0).toBeGreaterThan(0);
  });

  it("a box dragged to cover the left half serializes to exact integers", () => {
    let state = newCanvasState(128, 128);
    state = addCharacter(state, { ref: "hero", bbox: [40, 40, 60, 60] }, 4);
    state = moveBox(state, "characters", 0, [0, 0, 64, 128]);
    const spec = composeSpec(state);
    expect(spec.characters[0].bbox).toEqual([0, 0, 64, 128]);
  });

  it("enforces the character cap", () => {
    let state = newCanvasState(128, 128);
    for (let i = 0; i < 4; i++) {
      state = addCharacter(state, { ref: `c${i}`, bbox: [i * 4, 0, i * 4 + 8, 8] }, 4);
    }
    expect(() => addCharacter(state, { ref: "c4", bbox: [0, 0, 8, 8] }, 4)).toThrow(/4 characters/);
  });

  it("identical boxes warn but do not error", () => {
    let state = newCanvasState(128, 128);
    state = addCharacter(state, { ref: "a", bbox: [0, 0, 32, 32] }, 4);
    state = addCharacter(state, { ref: "b", bbox: [0, 0, 32, 32] }, 4);
    const warnings = overlapWarnings(state);
    expect(warnings).toHaveLength(1);
    expect(warnings[0]).toMatch(/identical/);
    expect(validateSpec(composeSpec(state))).toEqual([]);
  });
});

describe("server error mapping", () => {
  it("flags the exact box a 422 field path names", () => {
    let state = newCanvasState(128, 128);
    state = addCharacter(state, { ref: "a", bbox: [0, 0, 32, 32] }, 4);
    state = addCharacter(state, { ref: "b", bbox: [32, 0, 64, 32] }, 4);
    const { state: flagged, matched } = flagBoxFromFieldPath(state, "characters[1].bbox");
    expect(matched).toBe(true);
    expect(flagged.characters[0].flagged).toBeFalsy();
    expect(flagged.characters[1].flagged).toBe(true);
  });

  it("maps dialog field paths too", () => {
    let state = newCanvasState(128, 128);
    state = addDialog(state, [0, 0, 20, 20]);
    const { state: flagged, matched } = flagBoxFromFieldPath(state, "dialogs[0].bbox");
    expect(matched).toBe(true);
    expect(flagged.dialogs[0].flagged).toBe(true);
  });

  it("ignores non-box field paths", () => {
    const state = newCanvasState(128, 128);
    expect(flagBoxFromFieldPath(state, "caption").matched).toBe(false);
    expect(flagBoxFromFieldPath(state, "characters[5].bbox").matched).toBe(false);
  });

  it("moving a flagged box clears the flag", () => {
    let state = newCanvasState(128, 128);
    state = addCharacter(state, { ref: "a", bbox: [0, 0, 32, 32] }, 4);
    state = flagBoxFromFieldPath(state, "characters[0].bbox").state;
    expect(state.characters[0].flagged).toBe(true);
    state = moveBox(state, "characters", 0, [8, 8, 40, 40]);
    expect(state.characters[0].flagged).toBe(false);
  });
});
