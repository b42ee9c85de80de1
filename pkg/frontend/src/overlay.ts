/** Pure pixel helpers for the canvas layers, kept free of DOM types so they
 * are unit-testable. */

export interface Rgba {
  r: number;
  g: number;
  b: number;
  a: number;
}

export const MASK_COLOR: Rgba = { r: 66, g: 135, b: 245, a: 255 };
export const FG_MARKER: Rgba = { r: 46, g: 204, b: 113, a: 255 };
export const BG_MARKER: Rgba = { r: 231, g: 76, b: 60, a: 255 };

/** Tint a flat binary mask into an RGBA buffer suitable for putImageData. */
export function maskToRgba(
  mask: Uint8Array,
  width: number,
  height: number,
  opacity: number,
  color: Rgba = MASK_COLOR,
): Uint8ClampedArray<ArrayBuffer> {
  if (mask.length !== width * height) {
    throw new Error(`mask has ${mask.length} pixels, canvas is ${width}x${height}`);
  }
  const alpha = Math.round(Math.min(1, Math.max(0, opacity)) * 255);
  const out = new Uint8ClampedArray(new ArrayBuffer(width * height * 4));
  for (let i = 0; i < mask.length; i++) {
    if (!mask[i]) continue;
    out[i * 4] = color.r;
    out[i * 4 + 1] = color.g;
    out[i * 4 + 2] = color.b;
    out[i * 4 + 3] = alpha;
  }
  return out;
}
