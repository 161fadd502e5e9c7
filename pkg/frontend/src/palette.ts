/** Stable display colors: class name -> palette slot via FNV-1a.
 *
 * Hashing the name (not the list position) keeps a class's color identical
 * across sessions and vocabulary edits.  Background is pinned to a neutral
 * gray so it never collides with a foreground hue.
 */

export const BACKGROUND = "background";
const BACKGROUND_COLOR: [number, number, number] = [72, 72, 72];
const GOLDEN_ANGLE = 137.50776405003785;

export function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

function hslToRgb(h: number, s: number, l: number): [number, number, number] {
  const c = (1 - Math.abs(2 * l - 1)) * s;
  const hp = h / 60;
  const x = c * (1 - Math.abs((hp % 2) - 1));
  let rgb: [number, number, number];
  if (hp < 1) rgb = [c, x, 0];
  else if (hp < 2) rgb = [x, c, 0];
  else if (hp < 3) rgb = [0, c, x];
  else if (hp < 4) rgb = [0, x, c];
  else if (hp < 5) rgb = [x, 0, c];
  else rgb = [c, 0, x];
  const m = l - c / 2;
  return [
    Math.round((rgb[0] + m) * 255),
    Math.round((rgb[1] + m) * 255),
    Math.round((rgb[2] + m) * 255),
  ];
}

export function classColor(name: string): [number, number, number] {
  if (name === BACKGROUND) return [...BACKGROUND_COLOR];
  const slot = fnv1a(name) % 256;
  const hue = (slot * GOLDEN_ANGLE) % 360;
  const lightness = 0.42 + 0.16 * ((slot >> 4) % 3);  // three brightness tiers
  return hslToRgb(hue, 0.68, lightness);
}
