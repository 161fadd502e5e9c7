/** Annotation export: indexed label PNG plus a JSON sidecar.
 *
 * The PNG stores the class index of each pixel (background = 0) with the
 * display palette, so it can be fed straight back into a dataset manifest
 * as ground truth.  The sidecar records the class list and the server's
 * config fingerprint so a re-import knows exactly what produced the labels.
 */

import { decodeLabelMap } from "./rle.js";
import { classColor } from "./palette.js";
import { encodeIndexedPng } from "./png.js";
import type { Session } from "./types.js";

export interface AnnotationExport {
  labelsPng: Uint8Array;
  sidecar: {
    classes: string[];
    config_fingerprint: string;
    meta: Record<string, unknown>;
  };
  baseName: string;
}

function stripExtension(name: string): string {
  const dot = name.lastIndexOf(".");
  return dot > 0 ? name.slice(0, dot) : name;
}

export function exportAnnotation(session: Session): AnnotationExport {
  const response = session.lastResponse;
  if (!response) {
    throw new Error("nothing to export: no segmentation response yet");
  }
  const labels = decodeLabelMap(response.labels_rle);
  const [height, width] = response.labels_rle.size;
  const palette = response.classes.map((name) => classColor(name));
  const labelsPng = encodeIndexedPng(labels, width, height, palette);
  return {
    labelsPng,
    sidecar: {
      classes: [...response.classes],
      config_fingerprint: response.config_fingerprint,
      meta: response.meta,
    },
    baseName: stripExtension(session.imageName ?? "annotation"),
  };
}
