import { describe, expect, it } from "vitest";

import { Annotator } from "../src/annotator.js";
import { ServiceClient } from "../src/api.js";
import { recorded, recordedFetch, type MockOptions } from "./mockService.js";

function makeAnnotator(options: MockOptions = {}, onError?: (m: string) => void) {
  const { fetch: fetchImpl, stats } = recordedFetch(options);
  const client = new ServiceClient("http://service", fetchImpl);
  const annotator = new Annotator(client, recorded.session_response, onError);
  return { annotator, stats, client };
}

/** The three recorded user actions: fg click, bg click, box drag. */
async function runRecordedScript(annotator: Annotator) {
  await annotator.placePoint(50, 45);
  annotator.mode = "point-bg";
  await annotator.placePoint(5, 95);
  annotator.mode = "box";
  await annotator.placeBox(25, 20, 80, 70);
}

describe("prompt accumulation", () => {
  it("issues exactly one predict per user action", async () => {
    const { annotator, stats } = makeAnnotator();
    await runRecordedScript(annotator);
    expect(stats.predicts).toBe(3);
  });

  it("resends all prompts cumulatively with use_previous_mask", async () => {
    const { annotator, stats } = makeAnnotator();
    await runRecordedScript(annotator);
    const bodies = stats.bodies as { prompts: { points: unknown[] }; use_previous_mask: boolean }[];
    expect(bodies.map((b) => b.prompts.points.length)).toEqual([1, 2, 2]);
    expect(bodies.every((b) => b.use_previous_mask)).toBe(true);
  });

  it("replaces the box on a second drag but keeps the points", async () => {
    const { annotator } = makeAnnotator({ lenient: true });
    await runRecordedScript(annotator);
    await annotator.placeBox(90, 80, 30, 25);
    const prompts = annotator.promptSet();
    expect(prompts.box).toEqual([30, 25, 90, 80]);
    expect(prompts.points).toHaveLength(2);
  });

  it("rolls prompts back and reports when the service fails", async () => {
    const errors: string[] = [];
    const { annotator, stats } = makeAnnotator({ failPredicts: 503 }, (m) => errors.push(m));
    await annotator.placePoint(50, 45);
    expect(stats.predicts).toBe(1);
    expect(errors).toHaveLength(1);
    expect(annotator.promptSet().points).toHaveLength(0);
    expect(annotator.response()).toBeNull();
  });
});

describe("request queueing", () => {
  it("keeps a single request in flight and never coalesces clicks", async () => {
    let release: (() => void)[] = [];
    const { annotator, stats } = makeAnnotator({
      gate: () => new Promise<void>((resolve) => release.push(resolve)),
    });
    const first = annotator.placePoint(50, 45);
    annotator.mode = "point-bg";
    const second = annotator.placePoint(5, 95);
    await new Promise((r) => setTimeout(r, 0));
    expect(stats.inFlight).toBe(1); // second click is queued, not in flight
    release.shift()!();
    await first;
    release.shift()!();
    await second;
    expect(stats.predicts).toBe(2);
    expect(stats.maxInFlight).toBe(1);
  });
});

describe("candidate switching", () => {
  it("defaults to the service best_index and switches without a request", async () => {
    const { annotator, stats } = makeAnnotator();
    await runRecordedScript(annotator);
    const resp = recorded.exchanges[2].response;
    expect(annotator.selectedCandidate).toBe(resp.best_index);
    const before = stats.predicts;
    annotator.selectCandidate((resp.best_index + 1) % 3);
    expect(annotator.selectedMaskRle()).toEqual(
      resp.masks_rle[(resp.best_index + 1) % 3],
    );
    expect(stats.predicts).toBe(before);
  });

  it("renders IoU estimates with two decimals", async () => {
    const { annotator } = makeAnnotator();
    await runRecordedScript(annotator);
    for (const label of annotator.iouLabels()) {
      expect(label).toMatch(/^\d\.\d\d$/);
    }
  });

  it("rejects switching before any prediction", () => {
    const { annotator } = makeAnnotator();
    expect(() => annotator.selectCandidate(1)).toThrow(/no prediction/);
  });
});

describe("ground-truth comparison", () => {
  it("shows Dice 1 when the ground truth equals the current mask", async () => {
    const { annotator } = makeAnnotator();
    await runRecordedScript(annotator);
    annotator.setGroundTruth(annotator.selectedMaskOriginal()!);
    expect(annotator.currentDice()).toBe(1);
  });

  it("shows Dice 0 for a disjoint ground truth", async () => {
    const { annotator } = makeAnnotator();
    await runRecordedScript(annotator);
    const mask = annotator.selectedMaskOriginal()!;
    const inverted = mask.map((v) => 1 - v) as Uint8Array;
    annotator.setGroundTruth(inverted);
    expect(annotator.currentDice()).toBe(0);
  });

  it("rejects a ground truth with mismatched dimensions", () => {
    const { annotator } = makeAnnotator();
    expect(() => annotator.setGroundTruth(new Uint8Array(32 * 32))).toThrow(/pixels/);
  });

  it("logs the Dice readout with every response", async () => {
    const { annotator } = makeAnnotator({ lenient: true });
    await annotator.placePoint(50, 45);
    annotator.setGroundTruth(annotator.selectedMaskOriginal()!);
    annotator.mode = "point-bg";
    await annotator.placePoint(5, 95);
    expect(annotator.log[0].dice).toBeNull(); // no GT yet on the first round
    expect(annotator.log[1].dice).not.toBeNull();
  });
});

describe("export and replay", () => {
  it("exports prompts in original-image coordinates with the final mask", async () => {
    const { annotator } = makeAnnotator();
    await runRecordedScript(annotator);
    const bundle = annotator.exportSession();
    expect(bundle.prompts.points).toEqual([
      { x: 50, y: 45, label: "fg" },
      { x: 5, y: 95, label: "bg" },
    ]);
    expect(bundle.prompts.box).toEqual([25, 20, 80, 70]);
    expect(bundle.finalMask?.size).toEqual([100, 100]);
    expect(bundle.log).toHaveLength(3);
  });

  it("exports an empty session as no prompts and no mask", () => {
    const { annotator } = makeAnnotator();
    const bundle = annotator.exportSession();
    expect(bundle.prompts.points).toHaveLength(0);
    expect(bundle.prompts.box).toBeNull();
    expect(bundle.finalMask).toBeNull();
  });

  it("replays an exported session to an identical final mask", async () => {
    const { annotator } = makeAnnotator();
    await runRecordedScript(annotator);
    const bundle = annotator.exportSession();

    const { annotator: fresh, stats } = makeAnnotator();
    await fresh.replay(bundle);
    expect(stats.resets).toBe(1);
    expect(stats.predicts).toBe(3);
    expect(fresh.exportSession().finalMask).toEqual(bundle.finalMask);
    expect(fresh.selectedMaskRle()).toEqual(annotator.selectedMaskRle());
  });
});
