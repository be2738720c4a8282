/**
 * DOM-free studio orchestration: compose a spec from the canvas state,
 * validate, submit, poll, record history, and map server field-path
 * errors back onto the offending box. The DOM layer renders whatever
 * this returns.
 */

import { hashBytes, StudioApi, type ApiError } from "./api.js";
import {
  composeSpec,
  flagBoxFromFieldPath,
  type CanvasState,
} from "./canvasState.js";
import { SessionHistory } from "./history.js";
import type { GenerationJob, PanelSpec, ServiceConfig } from "./types.js";
import { validateSpec } from "./validate.js";

export interface GenerateOutcome {
  state: CanvasState;
  ok: boolean;
  job?: GenerationJob;
  resultHash?: string;
  /** Client- or server-side validation messages for inline display. */
  errors: string[];
  /** True when a retry button makes sense (network, queue full). */
  retriable: boolean;
}

export class StudioController {
  readonly history = new SessionHistory();

  constructor(
    private readonly api: StudioApi,
    private config?: ServiceConfig
  ) {}

  async loadConfig(): Promise<ServiceConfig | undefined> {
    const result = await this.api.config();
    if (result.ok) this.config = result.value;
    return this.config;
  }

  get serviceConfig(): ServiceConfig | undefined {
    return this.config;
  }

  /** Submit the current canvas and track the job to completion. */
  async generateAndTrack(state: CanvasState): Promise<GenerateOutcome> {
    const spec = composeSpec(state);
    const clientErrors = validateSpec(spec, this.config);
    if (spec.caption.trim() === "" && !state.captionConfirmedEmpty) {
      clientErrors.unshift("caption: empty caption needs explicit confirmation");
    }
    if (clientErrors.length > 0) {
      return { state, ok: false, errors: clientErrors, retriable: false };
    }
    const specJson = JSON.stringify(spec);
    const submitted = await this.api.submitGenerate(spec);
    if (!submitted.ok) {
      return this.failure(state, submitted.error);
    }
    const finished = await this.api.pollJob(submitted.value.id);
    if (!finished.ok) {
      return this.failure(state, finished.error);
    }
    const job = finished.value;
    if (job.state === "failed") {
      return {
        state,
        ok: false,
        job,
        errors: [job.error ?? "generation failed"],
        retriable: true,
      };
    }
    const bytes = await this.api.fetchResultBytes(job);
    if (!bytes.ok) {
      return this.failure(state, bytes.error);
    }
    const resultHash = await hashBytes(bytes.value);
    this.history.append({
      spec,
      specJson,
      jobId: job.id,
      resultUrl: job.result_url ?? "",
      resultHash,
    });
    const next: CanvasState = {
      ...state,
      lastJobId: job.id,
      lastResultUrl: job.result_url ?? undefined,
    };
    return { state: next, ok: true, job, resultHash, errors: [], retriable: false };
  }

  /** Re-run a history entry verbatim; deterministic specs hash-match. */
  async rerun(index: number): Promise<GenerateOutcome> {
    const entry = this.history.get(index);
    const state = this.history.restore(index);
    const outcome = await this.generateAndTrack(state);
    if (outcome.ok && outcome.resultHash !== entry.resultHash) {
      return {
        ...outcome,
        ok: false,
        errors: [
          `re-run produced a different image (was ${entry.resultHash.slice(0, 12)}, ` +
            `got ${outcome.resultHash?.slice(0, 12)})`,
        ],
        retriable: false,
      };
    }
    return outcome;
  }

  private failure(state: CanvasState, error: ApiError): GenerateOutcome {
    let next = state;
    if (error.field) {
      next = flagBoxFromFieldPath(state, error.field).state;
    }
    return {
      state: next,
      ok: false,
      errors: [error.field ? `${error.field}: ${error.message}` : error.message],
      retriable: error.retriable,
    };
  }
}

export { composeSpec };
export type { PanelSpec };
