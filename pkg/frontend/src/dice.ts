/** Dice overlap 2|P∩G| / (|P|+|G|) between two flat binary masks.
 * Matches the service-side metric, including the both-empty = 1 convention. */
export function dice(pred: Uint8Array, gt: Uint8Array): number {
  if (pred.length !== gt.length) {
    throw new Error(`mask sizes differ: ${pred.length} vs ${gt.length}`);
  }
  let inter = 0;
  let p = 0;
  let g = 0;
  for (let i = 0; i < pred.length; i++) {
    const a = pred[i] ? 1 : 0;
    const b = gt[i] ? 1 : 0;
    inter += a & b;
    p += a;
    g += b;
  }
  if (p + g === 0) return 1.0;
  return (2 * inter) / (p + g);
}
