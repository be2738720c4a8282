/**
 * Client-side PanelSpec validation mirroring the service schema, so the
 * studio never submits a request that would fail structural validation.
 * Returns error strings prefixed with the offending field path.
 */

import type { PanelSpec, ServiceConfig } from "./types.js";

function checkBox(raw: unknown, canvas: [number, number], path: string, errors: string[]): void {
  if (!Array.isArray(raw) || raw.length !== 4 || !raw.every((v) => Number.isInteger(v) && v >= 0)) {
    errors.push(`${path}: bbox must be 4 non-negative integers`);
    return;
  }
  const [x0, y0, x1, y1] = raw as number[];
  if (x0 >= x1 || y0 >= y1) errors.push(`${path}: needs x0 < x1 and y0 < y1`);
  if (x1 > canvas[0] || y1 > canvas[1]) {
    errors.push(`${path}: box exceeds the ${canvas[0]}x${canvas[1]} canvas`);
  }
}

export function validateSpec(spec: PanelSpec, config?: ServiceConfig): string[] {
  const errors: string[] = [];
  if (typeof spec.caption !== "string") errors.push("caption: must be a string");
  if (
    !Array.isArray(spec.size) ||
    spec.size.length !== 2 ||
    !spec.size.every((v) => Number.isInteger(v) && v >= 8)
  ) {
    errors.push("size: must be two integers >= 8");
    return errors;
  }
  const size = spec.size as [number, number];
  if (config && !config.buckets.some(([w, h]) => w === size[0] && h === size[1])) {
    errors.push(`size: ${size[0]}x${size[1]} is not a configured bucket`);
  }
  const chars = spec.characters ?? [];
  if (config && chars.length > config.max_characters) {
    errors.push(`characters: ${chars.length} exceeds the limit of ${config.max_characters}`);
  }
  chars.forEach((c, i) => {
    if (!c.ref) errors.push(`characters[${i}].ref: missing character id`);
    checkBox(c.bbox, size, `characters[${i}].bbox`, errors);
  });
  (spec.dialogs ?? []).forEach((d, i) => checkBox(d.bbox, size, `dialogs[${i}].bbox`, errors));
  if (spec.beta !== undefined && (spec.beta < 0 || spec.beta > 1)) {
    errors.push("beta: must be in [0, 1]");
  }
  if (spec.steps !== undefined && (!Number.isInteger(spec.steps) || spec.steps < 1)) {
    errors.push("steps: must be a positive integer");
  }
  if (spec.seed !== undefined && (!Number.isInteger(spec.seed) || spec.seed < 0)) {
    errors.push("seed: must be a non-negative integer");
  }
  return errors;
}
