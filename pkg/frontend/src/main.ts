import { Annotator } from "./annotator.js";
import { ServiceClient } from "./api.js";
import { BG_MARKER, FG_MARKER, maskToRgba } from "./overlay.js";
import type { InteractionMode } from "./types.js";

/** Browser entry point: wires the canvas, toolbar, and service client.
 * All annotation logic lives in Annotator; this file only shuffles pixels. */

const client = new ServiceClient("");
let annotator: Annotator | null = null;
let imageBitmap: ImageBitmap | null = null;
let dragStart: [number, number] | null = null;

const canvas = document.getElementById("canvas") as HTMLCanvasElement;
const fileInput = document.getElementById("image-file") as HTMLInputElement;
const gtInput = document.getElementById("gt-file") as HTMLInputElement;
const modeSelect = document.getElementById("mode") as HTMLSelectElement;
const opacitySlider = document.getElementById("opacity") as HTMLInputElement;
const candidateBar = document.getElementById("candidates") as HTMLDivElement;
const diceLabel = document.getElementById("dice") as HTMLSpanElement;
const toast = document.getElementById("toast") as HTMLDivElement;
const exportButton = document.getElementById("export") as HTMLButtonElement;

function showToast(message: string): void {
  toast.textContent = message;
  toast.classList.add("visible");
  setTimeout(() => toast.classList.remove("visible"), 4000);
}

function canvasPoint(ev: MouseEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  const x = ((ev.clientX - rect.left) * canvas.width) / rect.width;
  const y = ((ev.clientY - rect.top) * canvas.height) / rect.height;
  return [Math.round(x), Math.round(y)];
}

function redraw(): void {
  const ctx = canvas.getContext("2d");
  if (!ctx || !imageBitmap || !annotator) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(imageBitmap, 0, 0);

  const mask = annotator.selectedMaskOriginal();
  if (mask) {
    const rgba = maskToRgba(mask, canvas.width, canvas.height, annotator.opacity);
    const layer = new OffscreenCanvas(canvas.width, canvas.height);
    const lctx = layer.getContext("2d")!;
    lctx.putImageData(new ImageData(rgba, canvas.width, canvas.height), 0, 0);
    ctx.drawImage(layer, 0, 0);
  }

  for (const p of annotator.promptSet().points) {
    const c = p.label === "fg" ? FG_MARKER : BG_MARKER;
    ctx.fillStyle = `rgb(${c.r},${c.g},${c.b})`;
    ctx.beginPath();
    ctx.arc(p.x, p.y, 4, 0, 2 * Math.PI);
    ctx.fill();
  }
  const box = annotator.promptSet().box;
  if (box) {
    ctx.strokeStyle = "#f5c542";
    ctx.lineWidth = 2;
    ctx.strokeRect(box[0], box[1], box[2] - box[0], box[3] - box[1]);
  }

  candidateBar.replaceChildren(
    ...annotator.iouLabels().map((label, i) => {
      const button = document.createElement("button");
      button.textContent = `#${i}: ${label}`;
      button.classList.toggle("active", i === annotator!.selectedCandidate);
      button.onclick = () => {
        annotator!.selectCandidate(i);
        redraw();
      };
      return button;
    }),
  );
  const d = annotator.currentDice();
  diceLabel.textContent = d === null ? "" : `Dice ${d.toFixed(2)}`;
}

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  try {
    const session = await client.createSession(file);
    annotator = new Annotator(client, session, showToast);
    imageBitmap = await createImageBitmap(file);
    [canvas.width, canvas.height] = [imageBitmap.width, imageBitmap.height];
    redraw();
  } catch (err) {
    showToast(err instanceof Error ? err.message : String(err));
  }
});

gtInput.addEventListener("change", async () => {
  const file = gtInput.files?.[0];
  if (!file || !annotator) return;
  const bitmap = await createImageBitmap(file);
  const scratch = new OffscreenCanvas(bitmap.width, bitmap.height);
  const sctx = scratch.getContext("2d")!;
  sctx.drawImage(bitmap, 0, 0);
  const data = sctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
  const mask = new Uint8Array(bitmap.width * bitmap.height);
  for (let i = 0; i < mask.length; i++) mask[i] = data[i * 4] > 127 ? 1 : 0;
  try {
    annotator.setGroundTruth(mask);
    redraw();
  } catch (err) {
    showToast(err instanceof Error ? err.message : String(err));
  }
});

canvas.addEventListener("mousedown", (ev) => {
  if (annotator?.mode === "box") dragStart = canvasPoint(ev);
});

canvas.addEventListener("mouseup", async (ev) => {
  if (!annotator) return;
  const [x, y] = canvasPoint(ev);
  if (annotator.mode === "box" && dragStart) {
    const [x0, y0] = dragStart;
    dragStart = null;
    await annotator.placeBox(x0, y0, x, y);
  } else {
    await annotator.placePoint(x, y);
  }
  redraw();
});

modeSelect.addEventListener("change", () => {
  if (annotator) annotator.mode = modeSelect.value as InteractionMode;
});

opacitySlider.addEventListener("input", () => {
  if (annotator) {
    annotator.opacity = Number(opacitySlider.value);
    redraw();
  }
});

exportButton.addEventListener("click", () => {
  if (!annotator) return;
  const bundle = annotator.exportSession();
  const blob = new Blob([JSON.stringify(bundle, null, 2)], { type: "application/json" });
  const link = document.createElement("a");
  link.href = URL.createObjectURL(blob);
  link.download = "annotation-session.json";
  link.click();
  URL.revokeObjectURL(link.href);
});
