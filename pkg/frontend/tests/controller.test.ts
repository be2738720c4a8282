import { describe, expect, it } from "vitest";

import { hashBytes, StudioApi } from "../src/api.js";
import { addCharacter, addDialog, newCanvasState } from "../src/canvasState.js";
import { StudioController } from "../src/controller.js";
import type { GenerationJob, PanelSpec } from "../src/types.js";

/**
 * Scripted service: deterministic fake of the HTTP surface. Jobs pass
 * through queued -> running -> done over successive polls and the result
 * bytes are a pure function of the submitted spec, mirroring the real
 * service's seed determinism.
 */
class FakeService {
  jobs = new Map<string, { spec: PanelSpec; polls: number }>();
  submits = 0;
  failNextSubmits = 0;
  rejectWith: { status: number; field?: string; message: string } | null = null;

  resultBytes(spec: PanelSpec): Uint8Array {
    const text = JSON.stringify(spec);
    const bytes = new Uint8Array(64);
    for (let i = 0; i < text.length; i++) {
      bytes[i % 64] = (bytes[i % 64] + text.charCodeAt(i) * (i + 1)) % 256;
    }
    return bytes;
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const path = url.replace("http://fake", "");
    if (path === "/config") {
      return Response.json({
        alpha: 0.6, beta: 0.4, steps: 50, max_characters: 4,
        buckets: [[128, 128], [128, 192], [192, 128], [256, 256]],
        queue_depth: 8, checkpoint: null, config_hash: "fake",
      });
    }
    if (path === "/generate" && init?.method === "POST") {
      if (this.failNextSubmits > 0) {
        this.failNextSubmits--;
        throw new TypeError("network down");
      }
      if (this.rejectWith) {
        const { status, field, message } = this.rejectWith;
        return Response.json({ detail: field ? { field, message } : message }, { status });
      }
      const spec = JSON.parse(init.body as string) as PanelSpec;
      this.submits++;
      const id = `job${this.submits}`;
      this.jobs.set(id, { spec, polls: 0 });
      return Response.json(this.jobDoc(id), { status: 202 });
    }
    const jobMatch = /^\/jobs\/(.+)$/.exec(path);
    if (jobMatch) {
      const record = this.jobs.get(jobMatch[1]);
      if (!record) return Response.json({ detail: "unknown job" }, { status: 404 });
      record.polls++;
      return Response.json(this.jobDoc(jobMatch[1]));
    }
    const resultMatch = /^\/results\/(.+)$/.exec(path);
    if (resultMatch) {
      const record = this.jobs.get(resultMatch[1].replace(".png", ""));
      if (!record) return new Response("missing", { status: 404 });
      return new Response(this.resultBytes(record.spec).slice().buffer);
    }
    return Response.json({ detail: "no such route" }, { status: 404 });
  };

  jobDoc(id: string): GenerationJob {
    const record = this.jobs.get(id)!;
    const state = record.polls === 0 ? "queued" : record.polls === 1 ? "running" : "done";
    return {
      id,
      state,
      spec: record.spec,
      result_url: state === "done" ? `/results/${id}.png` : null,
      result_base64: null,
      error: null,
    };
  }
}

function makeController(service: FakeService): StudioController {
  const api = new StudioApi("http://fake", service.fetch, async () => {});
  return new StudioController(api);
}

function readyState() {
  let state = newCanvasState(128, 128);
  state = { ...state, caption: "a calm bridge", seed: 12, steps: 4 };
  state = addCharacter(state, { ref: "hero", bbox: [0, 32, 64, 128] }, 4);
  state = addDialog(state, [70, 4, 120, 30]);
  return state;
}

describe("generateAndTrack", () => {
  it("submits, polls to done, records history, and hashes the result", async () => {
    const service = new FakeService();
    const controller = makeController(service);
    await controller.loadConfig();
    const outcome = await controller.generateAndTrack(readyState());
    expect(outcome.ok).toBe(true);
    expect(outcome.job?.state).toBe("done");
    expect(controller.history.length).toBe(1);
    const expectedHash = await hashBytes(service.resultBytes(controller.history.get(0).spec));
    expect(outcome.resultHash).toBe(expectedHash);
    expect(outcome.state.lastResultUrl).toBe("/results/job1.png");
  });

  it("client-side validation blocks bad specs before any request", async () => {
    const service = new FakeService();
    const controller = makeController(service);
    await controller.loadConfig();
    let state = newCanvasState(128, 128);
    state = { ...state, caption: "x", steps: 0 };
    const outcome = await controller.generateAndTrack(state);
    expect(outcome.ok).toBe(false);
    expect(outcome.errors.some((e) => e.startsWith("steps"))).toBe(true);
    expect(service.submits).toBe(0);
  });

  it("an empty caption needs explicit confirmation", async () => {
    const service = new FakeService();
    const controller = makeController(service);
    const state = { ...newCanvasState(128, 128), steps: 4 };
    const blocked = await controller.generateAndTrack(state);
    expect(blocked.ok).toBe(false);
    expect(blocked.errors[0]).toMatch(/empty caption/);
    expect(service.submits).toBe(0);
    const confirmed = await controller.generateAndTrack({ ...state, captionConfirmedEmpty: true });
    expect(confirmed.ok).toBe(true);
  });

  it("restoring an empty-caption entry keeps it re-runnable", async () => {
    const service = new FakeService();
    const controller = makeController(service);
    await controller.generateAndTrack({ ...newCanvasState(128, 128), steps: 4, captionConfirmedEmpty: true });
    const restored = controller.history.restore(0);
    expect(restored.captionConfirmedEmpty).toBe(true);
    const rerun = await controller.rerun(0);
    expect(rerun.ok).toBe(true);
  });

  it("maps a 422 onto the offending box and is not retriable", async () => {
    const service = new FakeService();
    service.rejectWith = {
      status: 422,
      field: "characters[0].bbox",
      message: "box [0, 32, 64, 200] exceeds the 128x128 canvas",
    };
    const controller = makeController(service);
    await controller.loadConfig();
    const outcome = await controller.generateAndTrack(readyState());
    expect(outcome.ok).toBe(false);
    expect(outcome.retriable).toBe(false);
    expect(outcome.state.characters[0].flagged).toBe(true);
    expect(outcome.errors[0]).toMatch(/characters\[0\]\.bbox/);
  });

  it("surfaces unknown character refs from the 404 field path", async () => {
    const service = new FakeService();
    service.rejectWith = { status: 404, field: "characters[0].ref", message: "unknown character 'ghost'" };
    const controller = makeController(service);
    const outcome = await controller.generateAndTrack(readyState());
    expect(outcome.ok).toBe(false);
    expect(outcome.errors[0]).toMatch(/characters\[0\]\.ref/);
  });

  it("network failure is retriable (retry affordance)", async () => {
    const service = new FakeService();
    service.failNextSubmits = 1;
    const controller = makeController(service);
    const first = await controller.generateAndTrack(readyState());
    expect(first.ok).toBe(false);
    expect(first.retriable).toBe(true);
    const second = await controller.generateAndTrack(readyState());
    expect(second.ok).toBe(true);
  });

  it("queue-full responses are retriable", async () => {
    const service = new FakeService();
    service.rejectWith = { status: 429, message: "job queue is full (depth 8)" };
    const controller = makeController(service);
    const outcome = await controller.generateAndTrack(readyState());
    expect(outcome.ok).toBe(false);
    expect(outcome.retriable).toBe(true);
  });
});

describe("history", () => {
  it("restore returns the exact editor state that was submitted", async () => {
    const service = new FakeService();
    const controller = makeController(service);
    const state = readyState();
    await controller.generateAndTrack(state);
    const restored = controller.history.restore(0);
    expect(restored.caption).toBe(state.caption);
    expect(restored.characters.map((c) => c.bbox)).toEqual(state.characters.map((c) => c.bbox));
    expect(restored.seed).toBe(state.seed);
  });

  it("replayDocument reproduces the exact submitted bytes", async () => {
    const service = new FakeService();
    const controller = makeController(service);
    const state = readyState();
    await controller.generateAndTrack(state);
    const replay = controller.history.replayDocument(0);
    expect(JSON.parse(replay)).toEqual(controller.history.get(0).spec);
    // byte-exact: serializing the restored state again gives the same string
    const { composeSpec } = await import("../src/canvasState.js");
    expect(JSON.stringify(composeSpec(controller.history.restore(0)))).toBe(replay);
  });

  it("re-running an unchanged entry yields the identical image hash", async () => {
    const service = new FakeService();
    const controller = makeController(service);
    await controller.generateAndTrack(readyState());
    const before = controller.history.get(0).resultHash;
    const outcome = await controller.rerun(0);
    expect(outcome.ok).toBe(true);
    expect(outcome.resultHash).toBe(before);
    expect(controller.history.length).toBe(2);
    expect(controller.history.get(1).resultHash).toBe(before);
  });

  it("a divergent re-run is reported as a failure", async () => {
    const service = new FakeService();
    const controller = makeController(service);
    await controller.generateAndTrack(readyState());
    // corrupt the recorded hash to simulate a non-deterministic server
    controller.history.get(0).resultHash = "0".repeat(64);
    const outcome = await controller.rerun(0);
    expect(outcome.ok).toBe(false);
    expect(outcome.errors[0]).toMatch(/different image/);
  });
});
