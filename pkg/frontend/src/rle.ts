import type { Rle } from "./types.js";

/** Decode row-major run-length counts (alternating background/foreground,
 * starting with background) into a flat boolean mask. */
export function decodeRle(rle: Rle): Uint8Array {
  const [h, w] = rle.size;
  const out = new Uint8Array(h * w);
  let pos = 0;
  let value = 0;
  for (const count of rle.counts) {
    if (value) out.fill(1, pos, pos + count);
    pos += count;
    value ^= 1;
  }
  if (pos !== h * w) {
    throw new Error(`RLE covers ${pos} pixels, mask has ${h * w}`);
  }
  return out;
}

export function maskArea(mask: Uint8Array): number {
  let area = 0;
  for (const v of mask) area += v;
  return area;
}
