import type { ServiceClient } from "./api.js";
import { dice } from "./dice.js";
import { decodeRle } from "./rle.js";
import { maskToOriginal } from "./transform.js";
import type {
  BoxPrompt,
  InteractionMode,
  LogEntry,
  PointLabel,
  PredictResponse,
  PromptSetJson,
  SessionResponse,
  Rle,
} from "./types.js";

export interface ExportBundle {
  prompts: PromptSetJson;
  log: LogEntry[];
  /** Selected candidate at original resolution, null before the first response. */
  finalMask: { size: [number, number]; data: number[] } | null;
}

/** Annotation state for one service session: cumulative prompts, the latest
 * candidate masks, and an append-only interaction log.
 *
 * Every user action issues exactly one predict request. Actions taken while
 * a request is in flight are queued and sent one at a time, never merged. */
export class Annotator {
  mode: InteractionMode = "point-fg";
  opacity = 0.6;
  selectedCandidate = 0;
  readonly log: LogEntry[] = [];

  private points: { x: number; y: number; label: PointLabel }[] = [];
  private box: BoxPrompt | null = null;
  private lastResponse: PredictResponse | null = null;
  private gtMask: Uint8Array | null = null;
  private chain: Promise<void> = Promise.resolve();

  constructor(
    private readonly client: ServiceClient,
    private readonly session: SessionResponse,
    private readonly onError: (message: string) => void = () => {},
  ) {}

  /** Click in original-image coordinates; the active mode decides the label. */
  placePoint(x: number, y: number): Promise<void> {
    const label: PointLabel = this.mode === "point-bg" ? "bg" : "fg";
    return this.enqueue(() => {
      this.points.push({ x, y, label });
      return `point-${label}`;
    });
  }

  /** Box drag; a second drag replaces the previous box, points are kept. */
  placeBox(x0: number, y0: number, x1: number, y1: number): Promise<void> {
    return this.enqueue(() => {
      this.box = [Math.min(x0, x1), Math.min(y0, y1), Math.max(x0, x1), Math.max(y0, y1)];
      return "box";
    });
  }

  /** Change which candidate the overlay shows. Rendering only, no request. */
  selectCandidate(index: number): void {
    if (!this.lastResponse) throw new Error("no prediction yet");
    if (index < 0 || index >= this.lastResponse.masks_rle.length) {
      throw new Error(`candidate ${index} out of range`);
    }
    this.selectedCandidate = index;
  }

  /** Attach a ground-truth mask (flat, original resolution) for a live Dice readout. */
  setGroundTruth(mask: Uint8Array): void {
    const [h, w] = this.session.transform.original_shape;
    if (mask.length !== h * w) {
      throw new Error(`ground truth has ${mask.length} pixels, image has ${h * w}`);
    }
    this.gtMask = mask;
  }

  /** IoU estimates for display, two decimals per candidate. */
  iouLabels(): string[] {
    if (!this.lastResponse) return [];
    return this.lastResponse.iou_pred.map((v) => v.toFixed(2));
  }

  currentDice(): number | null {
    const mask = this.selectedMaskOriginal();
    if (!mask || !this.gtMask) return null;
    return dice(mask, this.gtMask);
  }

  promptSet(): PromptSetJson {
    return { points: [...this.points], box: this.box, dense: null };
  }

  response(): PredictResponse | null {
    return this.lastResponse;
  }

  selectedMaskRle(): Rle | null {
    return this.lastResponse?.masks_rle[this.selectedCandidate] ?? null;
  }

  /** Selected candidate cropped back to original-image resolution. */
  selectedMaskOriginal(): Uint8Array | null {
    const rle = this.selectedMaskRle();
    if (!rle) return null;
    return maskToOriginal(this.session.transform, decodeRle(rle));
  }

  exportSession(): ExportBundle {
    const mask = this.selectedMaskOriginal();
    const [h, w] = this.session.transform.original_shape;
    return {
      prompts: this.promptSet(),
      log: [...this.log],
      finalMask: mask ? { size: [h, w], data: Array.from(mask) } : null,
    };
  }

  /** Re-issue an exported prompt history from a clean session state. */
  async replay(bundle: ExportBundle): Promise<void> {
    await this.settled();
    await this.client.reset(this.session.session_id);
    this.points = [];
    this.box = null;
    this.lastResponse = null;
    for (const entry of bundle.log) {
      this.points = entry.prompts.points.map((p) => ({ ...p }));
      this.box = entry.prompts.box;
      await this.predictOnce(entry.action);
    }
  }

  /** Resolves once every queued action has been answered. */
  settled(): Promise<void> {
    return this.chain;
  }

  private enqueue(apply: () => string): Promise<void> {
    this.chain = this.chain.then(async () => {
      const savedPoints = this.points.map((p) => ({ ...p }));
      const savedBox = this.box;
      const action = apply();
      try {
        await this.predictOnce(action);
      } catch (err) {
        // roll the prompt edit back so a failed round leaves no trace
        this.points = savedPoints;
        this.box = savedBox;
        this.onError(err instanceof Error ? err.message : String(err));
      }
    });
    return this.chain;
  }

  private async predictOnce(action: string): Promise<void> {
    const prompts = this.promptSet();
    const resp = await this.client.predict(this.session.session_id, {
      prompts,
      use_previous_mask: true,
    });
    this.lastResponse = resp;
    this.selectedCandidate = resp.best_index;
    this.log.push({
      action,
      prompts,
      bestIndex: resp.best_index,
      iouPred: resp.iou_pred,
      dice: this.currentDice(),
    });
  }
}
