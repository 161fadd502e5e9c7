/** Run-length codec inverting the server's encoder bit for bit.
 *
 * Binary masks: counts alternate zero-runs and one-runs, starting with the
 * zero-run (which alone may be empty).  Label maps: [value, length] pairs.
 * Both are row-major and must cover height * width exactly.
 */

import type { RleBinaryMask, RleLabelMap } from "./types.js";

export function decodeBinaryMask(rle: RleBinaryMask): Uint8Array {
  const [h, w] = rle.size;
  if (h < 1 || w < 1) throw new Error(`invalid mask size ${rle.size}`);
  const out = new Uint8Array(h * w);
  let pos = 0;
  let value = 0;
  for (let i = 0; i < rle.counts.length; i++) {
    const run = rle.counts[i];
    if (!Number.isInteger(run) || run < 0) throw new Error("negative run length");
    if (run === 0 && i > 0) throw new Error("only the leading zero-run may be empty");
    if (value === 1) out.fill(1, pos, pos + run);
    pos += run;
    value ^= 1;
  }
  if (pos !== h * w) throw new Error(`runs cover ${pos} pixels, mask has ${h * w}`);
  return out;
}

export function encodeBinaryMask(mask: Uint8Array, height: number, width: number): RleBinaryMask {
  if (height < 1 || width < 1 || mask.length !== height * width) {
    throw new Error(`mask length ${mask.length} does not fit ${height}x${width}`);
  }
  const counts: number[] = [];
  let value = 0;
  let run = 0;
  for (const pixel of mask) {
    if (pixel !== 0 && pixel !== 1) throw new Error("mask values must be 0 or 1");
    if (pixel === value) {
      run += 1;
    } else {
      counts.push(run);
      value = pixel;
      run = 1;
    }
  }
  counts.push(run);
  return { size: [height, width], counts };
}

export function decodeLabelMap(rle: RleLabelMap): Uint8Array {
  const [h, w] = rle.size;
  if (h < 1 || w < 1) throw new Error(`invalid label map size ${rle.size}`);
  if (rle.runs.length === 0) throw new Error("label map has no runs");
  const out = new Uint8Array(h * w);
  let pos = 0;
  for (const [value, length] of rle.runs) {
    if (!Number.isInteger(length) || length < 1) throw new Error("run lengths must be positive");
    if (!Number.isInteger(value) || value < 0) throw new Error("label values must be non-negative");
    // the server caps vocabularies at 255 classes, so uint8 always suffices
    if (value > 255) throw new Error(`label value ${value} exceeds the 255-class limit`);
    out.fill(value, pos, pos + length);
    pos += length;
  }
  if (pos !== h * w) throw new Error(`runs cover ${pos} pixels, map has ${h * w}`);
  return out;
}

export function encodeLabelMap(labels: Uint8Array, height: number, width: number): RleLabelMap {
  if (height < 1 || width < 1 || labels.length !== height * width) {
    throw new Error(`label length ${labels.length} does not fit ${height}x${width}`);
  }
  const runs: [number, number][] = [];
  for (const value of labels) {
    const last = runs[runs.length - 1];
    if (last !== undefined && last[0] === value) {
      last[1] += 1;
    } else {
      runs.push([value, 1]);
    }
  }
  return { size: [height, width], runs };
}
