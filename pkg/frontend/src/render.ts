/** Pure raster compositing for the mask overlay.
 *
 * Works on plain RGBA buffers so the exactness tests can run without a DOM;
 * the app shovels the result into a canvas via ImageData.
 */

import { decodeBinaryMask } from "./rle.js";
import type { PerClassMask } from "./types.js";

export interface Raster {
  width: number;
  height: number;
  /** RGBA, row-major, 4 bytes per pixel. */
  data: Uint8ClampedArray;
}

export function emptyRaster(width: number, height: number): Raster {
  return { width, height, data: new Uint8ClampedArray(width * height * 4) };
}

export interface MaskLayer {
  mask: Uint8Array;
  color: [number, number, number];
  visible: boolean;
}

export function layersFromResponse(
  perClass: PerClassMask[],
  colorOf: (name: string) => [number, number, number],
  visibility: Map<string, boolean>,
): MaskLayer[] {
  return perClass.map((entry) => ({
    mask: decodeBinaryMask(entry.mask_rle),
    color: colorOf(entry.name),
    visible: visibility.get(entry.name) ?? true,
  }));
}

/** Alpha-blend visible mask layers over a base image (or transparent black).
 *
 * Every painted pixel comes straight from a decoded server mask; at opacity
 * 1 with no base the output support equals the mask support exactly.
 */
export function compositeMasks(
  base: Raster | null,
  width: number,
  height: number,
  layers: MaskLayer[],
  opacity: number,
): Raster {
  if (opacity < 0 || opacity > 1) throw new Error(`opacity ${opacity} outside [0, 1]`);
  const out = emptyRaster(width, height);
  if (base !== null) {
    if (base.width !== width || base.height !== height) {
      throw new Error(`base raster is ${base.width}x${base.height}, masks are ${width}x${height}`);
    }
    out.data.set(base.data);
  }
  for (const layer of layers) {
    if (!layer.visible) continue;
    if (layer.mask.length !== width * height) {
      throw new Error(`mask has ${layer.mask.length} pixels, raster needs ${width * height}`);
    }
    const [r, g, b] = layer.color;
    for (let i = 0; i < layer.mask.length; i++) {
      if (layer.mask[i] === 0) continue;
      const o = i * 4;
      out.data[o] = Math.round(out.data[o] * (1 - opacity) + r * opacity);
      out.data[o + 1] = Math.round(out.data[o + 1] * (1 - opacity) + g * opacity);
      out.data[o + 2] = Math.round(out.data[o + 2] * (1 - opacity) + b * opacity);
      out.data[o + 3] = Math.max(out.data[o + 3], Math.round(255 * opacity));
    }
  }
  return out;
}
