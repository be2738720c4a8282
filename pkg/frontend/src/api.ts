/**
 * Typed client for the generation service. `fetch` and `sleep` are
 * injectable so tests can run against scripted responses without a
 * server or real timers.
 */

import type { CharacterRecord, FieldError, GenerationJob, PanelSpec, ServiceConfig } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ApiError {
  kind: "validation" | "unknown_ref" | "queue_full" | "http" | "network";
  status?: number;
  field?: string;
  message: string;
  /** True when retrying the identical request may succeed. */
  retriable: boolean;
}

export type ApiResult<T> = { ok: true; value: T } | { ok: false; error: ApiError };

const sleepDefault = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

async function fieldErrorOf(response: Response): Promise<FieldError | null> {
  try {
    const body = await response.json();
    if (body && typeof body.detail === "object" && body.detail !== null && "field" in body.detail) {
      return body.detail as FieldError;
    }
    if (body && typeof body.detail === "string") {
      return { field: "", message: body.detail };
    }
  } catch {
    /* non-JSON body */
  }
  return null;
}

export class StudioApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
    private readonly sleep: (ms: number) => Promise<void> = sleepDefault
  ) {}

  url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<ApiResult<T>> {
    let response: Response;
    try {
      response = await this.fetchFn(this.url(path), init);
    } catch (err) {
      return {
        ok: false,
        error: { kind: "network", message: String(err), retriable: true },
      };
    }
    if (response.ok) {
      return { ok: true, value: (await response.json()) as T };
    }
    const detail = await fieldErrorOf(response);
    const message = detail?.message ?? `HTTP ${response.status}`;
    if (response.status === 422) {
      return {
        ok: false,
        error: { kind: "validation", status: 422, field: detail?.field, message, retriable: false },
      };
    }
    if (response.status === 404 && detail?.field) {
      return {
        ok: false,
        error: { kind: "unknown_ref", status: 404, field: detail.field, message, retriable: false },
      };
    }
    if (response.status === 429) {
      return { ok: false, error: { kind: "queue_full", status: 429, message, retriable: true } };
    }
    return {
      ok: false,
      error: { kind: "http", status: response.status, message, retriable: response.status >= 500 },
    };
  }

  config(): Promise<ApiResult<ServiceConfig>> {
    return this.request<ServiceConfig>("/config");
  }

  listCharacters(): Promise<ApiResult<CharacterRecord[]>> {
    return this.request<CharacterRecord[]>("/characters");
  }

  uploadCharacter(name: string, imageBase64: string): Promise<ApiResult<CharacterRecord>> {
    return this.request<CharacterRecord>("/characters", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ name, image_base64: imageBase64 }),
    });
  }

  submitGenerate(spec: PanelSpec): Promise<ApiResult<GenerationJob>> {
    return this.request<GenerationJob>("/generate", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(spec),
    });
  }

  getJob(jobId: string): Promise<ApiResult<GenerationJob>> {
    return this.request<GenerationJob>(`/jobs/${jobId}`);
  }

  /**
   * Poll until the job reaches a terminal state. 1 s base interval with
   * gentle backoff; generation at toy scale finishes in seconds, so
   * simplicity beats push channels.
   */
  async pollJob(
    jobId: string,
    opts: { intervalMs?: number; backoff?: number; maxIntervalMs?: number; timeoutMs?: number } = {}
  ): Promise<ApiResult<GenerationJob>> {
    const base = opts.intervalMs ?? 1000;
    const backoff = opts.backoff ?? 1.5;
    const maxInterval = opts.maxIntervalMs ?? 5000;
    const timeout = opts.timeoutMs ?? 120_000;
    let interval = base;
    let waited = 0;
    for (;;) {
      const result = await this.getJob(jobId);
      if (!result.ok) return result;
      const job = result.value;
      if (job.state === "done" || job.state === "failed") return result;
      if (waited >= timeout) {
        return {
          ok: false,
          error: { kind: "http", message: `job ${jobId} still ${job.state} after ${timeout} ms`, retriable: true },
        };
      }
      await this.sleep(interval);
      waited += interval;
      interval = Math.min(maxInterval, Math.round(interval * backoff));
    }
  }

  async fetchResultBytes(job: GenerationJob): Promise<ApiResult<Uint8Array>> {
    if (!job.result_url) {
      return { ok: false, error: { kind: "http", message: "job has no result", retriable: false } };
    }
    try {
      const response = await this.fetchFn(this.url(job.result_url));
      if (!response.ok) {
        return {
          ok: false,
          error: { kind: "http", status: response.status, message: `HTTP ${response.status}`, retriable: false },
        };
      }
      return { ok: true, value: new Uint8Array(await response.arrayBuffer()) };
    } catch (err) {
      return { ok: false, error: { kind: "network", message: String(err), retriable: true } };
    }
  }
}

/** SHA-256 of image bytes; used to confirm deterministic re-runs. */
export async function hashBytes(data: Uint8Array): Promise<string> {
  const digest = await crypto.subtle.digest("SHA-256", data.slice().buffer);
  return Array.from(new Uint8Array(digest))
    .map((b) => b.toString(16).padStart(2, "0"))
    .join("");
}
