/** Wire types mirroring the inference service JSON contract. */

export type PointLabel = "fg" | "bg";

export interface PointPrompt {
  x: number;
  y: number;
  label: PointLabel;
}

/** [x0, y0, x1, y1], exclusive max, original-image pixels. */
export type BoxPrompt = [number, number, number, number];

export interface PromptSetJson {
  points: PointPrompt[];
  box: BoxPrompt | null;
  dense: string | null;
}

export interface Rle {
  size: [number, number];
  counts: number[];
}

export interface TransformJson {
  kind: "pad" | "scale";
  original_shape: [number, number];
  target: number;
  offset: [number, number];
}

export interface SessionResponse {
  session_id: string;
  model_size: number;
  transform: TransformJson;
}

export interface PredictRequest {
  prompts: PromptSetJson;
  use_previous_mask: boolean;
}

export interface PredictResponse {
  masks_rle: Rle[];
  iou_pred: number[];
  best_index: number;
  transform: TransformJson;
}

export type InteractionMode = "point-fg" | "point-bg" | "box";

export interface LogEntry {
  action: string;
  prompts: PromptSetJson;
  bestIndex: number;
  iouPred: number[];
  dice: number | null;
}
