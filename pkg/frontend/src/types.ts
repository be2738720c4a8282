/** Wire types mirroring the service's published JSON schemas. */

export type BBox = [number, number, number, number]; // x0, y0, x1, y1 (integer pixels)

export interface PanelSpec {
  caption: string;
  characters: { ref: string; bbox: BBox }[];
  dialogs: { bbox: BBox }[];
  size: [number, number];
  alpha?: number;
  beta?: number;
  seed?: number;
  steps?: number;
}

export interface CharacterRecord {
  id: string;
  name: string;
  image_url: string;
  width?: number;
  height?: number;
  created_at: string;
}

export type JobState = "queued" | "running" | "done" | "failed";

export interface GenerationJob {
  id: string;
  state: JobState;
  spec: PanelSpec;
  result_url: string | null;
  result_base64: string | null;
  error: string | null;
  timings?: {
    queued_at: number | null;
    started_at: number | null;
    finished_at: number | null;
  };
}

export interface ServiceConfig {
  alpha: number;
  beta: number;
  steps: number;
  max_characters: number;
  buckets: [number, number][];
  queue_depth: number;
  checkpoint: string | null;
  config_hash: string;
}

/** Field-path error payload the service returns with 404/422 responses. */
export interface FieldError {
  field: string;
  message: string;
}
