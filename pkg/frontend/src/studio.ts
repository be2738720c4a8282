/**
 * DOM wiring for the panel composer: character library sidebar, canvas
 * with draggable character/dialog boxes, caption and sampler controls,
 * generation with inline error display, and a restorable history strip.
 */

import { StudioApi } from "./api.js";
import {
  addCharacter,
  addDialog,
  characterBoxAtDrop,
  moveBox,
  newCanvasState,
  overlapWarnings,
  removeBox,
  type CanvasState,
  type PlacedBox,
} from "./canvasState.js";
import { StudioController } from "./controller.js";
import type { CharacterRecord } from "./types.js";

const API_BASE = (window as { PANELFORGE_API?: string }).PANELFORGE_API ?? "http://127.0.0.1:8750";

interface DragContext {
  kind: "characters" | "dialogs";
  index: number;
  offsetX: number;
  offsetY: number;
}

class StudioApp {
  private api = new StudioApi(API_BASE);
  private controller = new StudioController(this.api);
  private state: CanvasState = newCanvasState(128, 128);
  private characters: CharacterRecord[] = [];
  private drag: DragContext | null = null;
  private busy = false;

  private canvas = document.getElementById("composer") as HTMLCanvasElement;
  private library = document.getElementById("library") as HTMLElement;
  private statusBox = document.getElementById("status") as HTMLElement;
  private historyBox = document.getElementById("history") as HTMLElement;
  private resultImg = document.getElementById("result") as HTMLImageElement;

  async start(): Promise<void> {
    const config = await this.controller.loadConfig();
    if (config) {
      this.state = {
        ...newCanvasState(config.buckets[0][0], config.buckets[0][1]),
        alpha: config.alpha,
        beta: config.beta,
        steps: config.steps,
      };
      const sizeSelect = document.getElementById("size") as HTMLSelectElement;
      sizeSelect.innerHTML = "";
      for (const [w, h] of config.buckets) {
        const option = document.createElement("option");
        option.value = `${w}x${h}`;
        option.textContent = `${w} x ${h}`;
        sizeSelect.appendChild(option);
      }
      sizeSelect.onchange = () => {
        const [w, h] = sizeSelect.value.split("x").map(Number);
        this.state = { ...this.state, width: w, height: h, characters: [], dialogs: [] };
        this.render();
      };
    } else {
      this.status("service unreachable; check the API server", true);
    }
    await this.refreshLibrary();
    this.bindControls();
    this.render();
  }

  private bindControls(): void {
    const caption = document.getElementById("caption") as HTMLTextAreaElement;
    caption.oninput = () => {
      this.state = { ...this.state, caption: caption.value };
    };
    for (const field of ["alpha", "beta", "seed", "steps"] as const) {
      const input = document.getElementById(field) as HTMLInputElement;
      input.value = String(this.state[field]);
      input.onchange = () => {
        this.state = { ...this.state, [field]: Number(input.value) };
      };
    }
    (document.getElementById("add-dialog") as HTMLButtonElement).onclick = () => {
      const w = Math.round(this.state.width * 0.4);
      const h = Math.round(this.state.height * 0.2);
      this.state = addDialog(this.state, [4, 4, 4 + w, 4 + h]);
      this.render();
    };
    (document.getElementById("generate") as HTMLButtonElement).onclick = () => void this.generate();

    this.canvas.ondragover = (ev) => ev.preventDefault();
    this.canvas.ondrop = (ev) => {
      ev.preventDefault();
      const ref = ev.dataTransfer?.getData("text/panelforge-character");
      if (!ref) return;
      const rect = this.canvas.getBoundingClientRect();
      const scaleX = this.state.width / rect.width;
      const scaleY = this.state.height / rect.height;
      const placed = characterBoxAtDrop(
        this.state,
        ref,
        Math.round((ev.clientX - rect.left) * scaleX),
        Math.round((ev.clientY - rect.top) * scaleY)
      );
      const max = this.controller.serviceConfig?.max_characters ?? 4;
      try {
        this.state = addCharacter(this.state, placed, max);
      } catch (err) {
        this.status(String(err), true);
        return;
      }
      this.render();
    };
    this.canvas.onmousedown = (ev) => this.beginDrag(ev);
    this.canvas.onmousemove = (ev) => this.dragTo(ev);
    this.canvas.onmouseup = () => (this.drag = null);
    this.canvas.ondblclick = (ev) => this.deleteAt(ev);
  }

  private canvasPoint(ev: MouseEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    return [
      Math.round(((ev.clientX - rect.left) * this.state.width) / rect.width),
      Math.round(((ev.clientY - rect.top) * this.state.height) / rect.height),
    ];
  }

  private hit(x: number, y: number): DragContext | null {
    const lists: ["characters", "dialogs"] = ["characters", "dialogs"];
    for (const kind of lists) {
      const boxes = this.state[kind];
      for (let i = boxes.length - 1; i >= 0; i--) {
        const [x0, y0, x1, y1] = boxes[i].bbox;
        if (x >= x0 && x < x1 && y >= y0 && y < y1) {
          return { kind, index: i, offsetX: x - x0, offsetY: y - y0 };
        }
      }
    }
    return null;
  }

  private beginDrag(ev: MouseEvent): void {
    const [x, y] = this.canvasPoint(ev);
    this.drag = this.hit(x, y);
  }

  private dragTo(ev: MouseEvent): void {
    if (!this.drag) return;
    const [x, y] = this.canvasPoint(ev);
    const { kind, index, offsetX, offsetY } = this.drag;
    const [x0, y0, x1, y1] = this.state[kind][index].bbox;
    const w = x1 - x0;
    const h = y1 - y0;
    this.state = moveBox(this.state, kind, index, [x - offsetX, y - offsetY, x - offsetX + w, y - offsetY + h]);
    this.render();
  }

  private deleteAt(ev: MouseEvent): void {
    const [x, y] = this.canvasPoint(ev);
    const hit = this.hit(x, y);
    if (hit) {
      this.state = removeBox(this.state, hit.kind, hit.index);
      this.render();
    }
  }

  private async refreshLibrary(): Promise<void> {
    const result = await this.api.listCharacters();
    if (!result.ok) {
      this.status(`library: ${result.error.message}`, true);
      return;
    }
    this.characters = result.value;
    this.library.innerHTML = "";
    for (const record of this.characters) {
      const card = document.createElement("div");
      card.className = "char-card";
      card.draggable = true;
      card.ondragstart = (ev) => {
        ev.dataTransfer?.setData("text/panelforge-character", record.id);
      };
      const img = document.createElement("img");
      img.src = this.api.url(record.image_url);
      img.alt = record.name;
      const label = document.createElement("span");
      label.textContent = record.name;
      card.append(img, label);
      this.library.appendChild(card);
    }
  }

  private async generate(): Promise<void> {
    if (this.busy) return;
    if (this.state.caption.trim() === "" && !this.state.captionConfirmedEmpty) {
      if (!window.confirm("Generate with an empty caption?")) return;
      this.state = { ...this.state, captionConfirmedEmpty: true };
    }
    this.busy = true;
    this.status("generating...");
    const outcome = await this.controller.generateAndTrack(this.state);
    this.state = outcome.state;
    this.busy = false;
    if (outcome.ok) {
      this.status(`done: job ${outcome.job?.id} (${outcome.resultHash?.slice(0, 12)})`);
      this.resultImg.src = this.api.url(outcome.state.lastResultUrl ?? "");
      this.renderHistory();
    } else {
      this.status(outcome.errors.join("; "), true, outcome.retriable);
    }
    this.render();
  }

  private renderHistory(): void {
    this.historyBox.innerHTML = "";
    this.controller.history.list().forEach((entry, index) => {
      const item = document.createElement("div");
      item.className = "history-entry";
      const img = document.createElement("img");
      img.src = this.api.url(entry.resultUrl);
      img.title = entry.spec.caption;
      const restore = document.createElement("button");
      restore.textContent = "restore";
      restore.onclick = () => {
        this.state = this.controller.history.restore(index);
        this.render();
      };
      const rerun = document.createElement("button");
      rerun.textContent = "re-run";
      rerun.onclick = async () => {
        this.status(`re-running entry ${index}...`);
        const outcome = await this.controller.rerun(index);
        this.status(
          outcome.ok ? `re-run matched (${outcome.resultHash?.slice(0, 12)})` : outcome.errors.join("; "),
          !outcome.ok
        );
        this.renderHistory();
      };
      item.append(img, restore, rerun);
      this.historyBox.appendChild(item);
    });
  }

  private status(text: string, isError = false, retriable = false): void {
    this.statusBox.textContent = text;
    this.statusBox.className = isError ? "status error" : "status";
    const retry = document.getElementById("retry") as HTMLButtonElement;
    retry.style.display = retriable ? "inline-block" : "none";
    retry.onclick = () => void this.generate();
  }

  private render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    this.canvas.width = this.state.width * 3;
    this.canvas.height = this.state.height * 3;
    ctx.scale(3, 3);
    ctx.fillStyle = "#ffffff";
    ctx.fillRect(0, 0, this.state.width, this.state.height);
    ctx.strokeStyle = "#222";
    ctx.lineWidth = 0.7;
    ctx.strokeRect(0, 0, this.state.width, this.state.height);

    const drawBox = (placed: PlacedBox, kind: "characters" | "dialogs", index: number) => {
      const [x0, y0, x1, y1] = placed.bbox;
      ctx.strokeStyle = placed.flagged ? "#d22" : kind === "characters" ? "#2a6" : "#46a";
      ctx.lineWidth = placed.flagged ? 1.6 : 1.0;
      if (kind === "dialogs") {
        // outlined bubble-style rectangle; text stays empty by design
        ctx.beginPath();
        ctx.ellipse((x0 + x1) / 2, (y0 + y1) / 2, (x1 - x0) / 2, (y1 - y0) / 2, 0, 0, Math.PI * 2);
        ctx.stroke();
      } else {
        ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
      }
      ctx.fillStyle = ctx.strokeStyle;
      ctx.font = "5px sans-serif";
      const record = this.characters.find((r) => r.id === placed.ref);
      const label = kind === "characters" ? record?.name ?? placed.ref ?? "?" : `dialog ${index}`;
      ctx.fillText(label ?? "", x0 + 1.5, y0 + 6);
    };
    this.state.characters.forEach((b, i) => drawBox(b, "characters", i));
    this.state.dialogs.forEach((b, i) => drawBox(b, "dialogs", i));

    const warnings = overlapWarnings(this.state);
    const warnBox = document.getElementById("warnings") as HTMLElement;
    warnBox.textContent = warnings.join("; ");
  }
}

window.addEventListener("DOMContentLoaded", () => {
  void new StudioApp().start();
});
