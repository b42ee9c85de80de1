import type { TransformJson } from "./types.js";

/** Map a click in original-image pixels into model-input pixels. */
export function toModel(t: TransformJson, x: number, y: number): [number, number] {
  if (t.kind === "pad") {
    const [oy, ox] = t.offset;
    return [x + ox, y + oy];
  }
  const [h, w] = t.original_shape;
  return [(x * t.target) / w, (y * t.target) / h];
}

/** Inverse of toModel, for drawing service masks back onto the image. */
export function toOriginal(t: TransformJson, x: number, y: number): [number, number] {
  if (t.kind === "pad") {
    const [oy, ox] = t.offset;
    return [x - ox, y - oy];
  }
  const [h, w] = t.original_shape;
  return [(x * w) / t.target, (y * h) / t.target];
}

/** Crop or resample a model-resolution flat mask back to original dimensions
 * (nearest neighbor in the scale case, offset crop in the pad case). */
export function maskToOriginal(t: TransformJson, mask: Uint8Array): Uint8Array {
  const [h, w] = t.original_shape;
  const s = t.target;
  const out = new Uint8Array(h * w);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const [mx, my] = toModel(t, x, y);
      const ix = Math.min(s - 1, Math.max(0, Math.round(mx)));
      const iy = Math.min(s - 1, Math.max(0, Math.round(my)));
      out[y * w + x] = mask[iy * s + ix];
    }
  }
  return out;
}
