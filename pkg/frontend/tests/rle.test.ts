import { describe, expect, it } from "vitest";

import { decodeRle, maskArea } from "../src/rle.js";
import { recorded } from "./mockService.js";

describe("decodeRle", () => {
  it("decodes a known pattern", () => {
    const mask = decodeRle({ size: [2, 3], counts: [1, 3, 2] });
    expect(Array.from(mask)).toEqual([0, 1, 1, 1, 0, 0]);
  });

  it("handles a leading foreground run", () => {
    const mask = decodeRle({ size: [1, 2], counts: [0, 1, 1] });
    expect(Array.from(mask)).toEqual([1, 0]);
  });

  it("handles an all-background mask", () => {
    expect(maskArea(decodeRle({ size: [3, 3], counts: [9] }))).toBe(0);
  });

  it("rejects counts that do not cover the mask", () => {
    expect(() => decodeRle({ size: [2, 2], counts: [1, 1] })).toThrow(/covers/);
  });

  it("decodes every recorded candidate to the model resolution", () => {
    const size = recorded.session_response.model_size;
    for (const exchange of recorded.exchanges) {
      for (const rle of exchange.response.masks_rle) {
        expect(decodeRle(rle)).toHaveLength(size * size);
      }
    }
  });
});
