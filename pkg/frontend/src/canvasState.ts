/**
 * Canvas-side editor state and its lossless mapping to PanelSpec JSON.
 *
 * Boxes live in integer canvas pixels and are always clamped to the
 * canvas; the composer therefore never emits a spec the server would
 * reject for bounds. Overlapping boxes are legal (the generator's
 * attention gate shares overlapped cells), so overlap is at most a
 * warning, never an error.
 */

import type { BBox, PanelSpec } from "./types.js";

export interface PlacedBox {
  bbox: BBox;
  /** Character-library id for character boxes; dialogs carry none. */
  ref?: string;
  /** Set when the server pointed at this box in a 422 response. */
  flagged?: boolean;
}

export interface CanvasState {
  width: number;
  height: number;
  caption: string;
  /** An empty caption must be explicitly confirmed before submission. */
  captionConfirmedEmpty?: boolean;
  characters: PlacedBox[];
  dialogs: PlacedBox[];
  alpha: number;
  beta: number;
  seed: number;
  steps: number;
  lastJobId?: string;
  lastResultUrl?: string;
}

export function newCanvasState(width: number, height: number): CanvasState {
  return {
    width,
    height,
    caption: "",
    characters: [],
    dialogs: [],
    alpha: 0.6,
    beta: 0.4,
    seed: 0,
    steps: 50,
  };
}

export function clampBox(box: BBox, width: number, height: number): BBox {
  let [x0, y0, x1, y1] = box.map(Math.round) as BBox;
  x0 = Math.max(0, Math.min(x0, width - 1));
  y0 = Math.max(0, Math.min(y0, height - 1));
  x1 = Math.max(x0 + 1, Math.min(x1, width));
  y1 = Math.max(y0 + 1, Math.min(y1, height));
  return [x0, y0, x1, y1];
}

/**
 * Dropping a library thumbnail places a default box: a quarter of the
 * canvas area, square, centered at the drop point, clamped to fit.
 */
export function characterBoxAtDrop(
  state: CanvasState,
  ref: string,
  dropX: number,
  dropY: number
): PlacedBox {
  const side = Math.round(Math.sqrt(0.25 * state.width * state.height));
  const half = Math.floor(side / 2);
  const box = clampBox(
    [dropX - half, dropY - half, dropX - half + side, dropY - half + side],
    state.width,
    state.height
  );
  return { ref, bbox: box };
}

export function addCharacter(state: CanvasState, placed: PlacedBox, maxCharacters: number): CanvasState {
  if (state.characters.length >= maxCharacters) {
    throw new Error(`cannot place more than ${maxCharacters} characters`);
  }
  if (!placed.ref) {
    throw new Error("character boxes need a library ref");
  }
  return { ...state, characters: [...state.characters, placed] };
}

export function addDialog(state: CanvasState, bbox: BBox): CanvasState {
  return {
    ...state,
    dialogs: [...state.dialogs, { bbox: clampBox(bbox, state.width, state.height) }],
  };
}

export function moveBox(
  state: CanvasState,
  kind: "characters" | "dialogs",
  index: number,
  bbox: BBox
): CanvasState {
  const list = state[kind].slice();
  if (index < 0 || index >= list.length) throw new Error(`no ${kind} box at index ${index}`);
  list[index] = { ...list[index], bbox: clampBox(bbox, state.width, state.height), flagged: false };
  return { ...state, [kind]: list };
}

export function removeBox(
  state: CanvasState,
  kind: "characters" | "dialogs",
  index: number
): CanvasState {
  const list = state[kind].slice();
  list.splice(index, 1);
  return { ...state, [kind]: list };
}

/** Boxes sharing identical coordinates are legal; surface them as a warning. */
export function overlapWarnings(state: CanvasState): string[] {
  const warnings: string[] = [];
  const all = [
    ...state.characters.map((b, i) => ({ b, label: `characters[${i}]` })),
    ...state.dialogs.map((b, i) => ({ b, label: `dialogs[${i}]` })),
  ];
  for (let i = 0; i < all.length; i++) {
    for (let j = i + 1; j < all.length; j++) {
      const a = all[i].b.bbox;
      const c = all[j].b.bbox;
      if (a[0] === c[0] && a[1] === c[1] && a[2] === c[2] && a[3] === c[3]) {
        warnings.push(`${all[i].label} and ${all[j].label} are identical boxes`);
      }
    }
  }
  return warnings;
}

/** Serialize editor state into the exact wire document the service takes. */
export function composeSpec(state: CanvasState): PanelSpec {
  return {
    caption: state.caption,
    characters: state.characters.map((c) => ({ ref: c.ref ?? "", bbox: [...c.bbox] as BBox })),
    dialogs: state.dialogs.map((d) => ({ bbox: [...d.bbox] as BBox })),
    size: [state.width, state.height],
    alpha: state.alpha,
    beta: state.beta,
    seed: state.seed,
    steps: state.steps,
  };
}

/** Rebuild editor state from a spec document (inverse of composeSpec). */
export function stateFromSpec(spec: PanelSpec): CanvasState {
  return {
    width: spec.size[0],
    height: spec.size[1],
    caption: spec.caption,
    // a restored empty-caption spec was accepted once already
    captionConfirmedEmpty: spec.caption.trim() === "" ? true : undefined,
    characters: (spec.characters ?? []).map((c) => ({ ref: c.ref, bbox: [...c.bbox] as BBox })),
    dialogs: (spec.dialogs ?? []).map((d) => ({ bbox: [...d.bbox] as BBox })),
    alpha: spec.alpha ?? 0.6,
    beta: spec.beta ?? 0.4,
    seed: spec.seed ?? 0,
    steps: spec.steps ?? 50,
  };
}

/**
 * Mark the box a server field-path error points at; returns the new
 * state and whether anything matched.
 */
export function flagBoxFromFieldPath(state: CanvasState, field: string): { state: CanvasState; matched: boolean } {
  const match = /^(characters|dialogs)\[(\d+)\]/.exec(field);
  if (!match) return { state, matched: false };
  const kind = match[1] as "characters" | "dialogs";
  const index = Number(match[2]);
  if (index >= state[kind].length) return { state, matched: false };
  const list = state[kind].slice();
  list[index] = { ...list[index], flagged: true };
  return { state: { ...state, [kind]: list }, matched: true };
}
