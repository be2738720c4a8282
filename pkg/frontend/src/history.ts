/**
 * Append-only session history: every completed generation is recorded as
 * the exact spec document submitted plus its result reference and hash,
 * and any entry can be restored into the editor or re-run verbatim.
 */

import { stateFromSpec, type CanvasState } from "./canvasState.js";
import type { PanelSpec } from "./types.js";

export interface HistoryEntry {
  spec: PanelSpec;
  specJson: string; // exact bytes submitted
  jobId: string;
  resultUrl: string;
  resultHash: string;
}

export class SessionHistory {
  private entries: HistoryEntry[] = [];

  get length(): number {
    return this.entries.length;
  }

  list(): readonly HistoryEntry[] {
    return this.entries;
  }

  append(entry: HistoryEntry): void {
    this.entries.push(entry);
  }

  get(index: number): HistoryEntry {
    const entry = this.entries[index];
    if (!entry) throw new Error(`no history entry ${index}`);
    return entry;
  }

  /** Restore an entry into editor state (lossless for spec fields). */
  restore(index: number): CanvasState {
    return stateFromSpec(this.get(index).spec);
  }

  /** The exact previously submitted document, byte for byte. */
  replayDocument(index: number): string {
    return this.get(index).specJson;
  }
}
