"""Evaluation protocols: Bbox and k-point interactive runs, Dice scoring,
aggregation by modality/anatomy/organ, adapter keep-vs-remove pairing, and
throughput measurement."""

from __future__ import annotations

import csv
import io
import json
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import prompts as ps
from .model import DecoderOutput, SegModel, remove_adapters

PROTOCOL_MODES = ("bbox", "points")
ADAPTER_MODES = ("keep", "remove")


@dataclass
class EvalProtocol:
    mode: str = "bbox"  # "bbox" | "points"
    num_points: int = 1  # points mode only
    resolution: int = 256
    adapters: str = "keep"  # "keep" | "remove"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in PROTOCOL_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.adapters not in ADAPTER_MODES:
            raise ValueError(f"unknown adapters option {self.adapters!r}")
        if self.mode == "points" and self.num_points not in (1, 3, 5, 9):
            raise ValueError(f"num_points must be one of 1/3/5/9, got {self.num_points}")

    def label(self) -> str:
        return "bbox" if self.mode == "bbox" else f"{self.num_points}pt"


@dataclass
class EvalSample:
    """One (image, mask) pair plus its aggregation keys."""
    image: np.ndarray  # uint8 (S, S)
    gt: np.ndarray  # bool (S, S)
    image_id: str = ""
    mask_id: str = ""
    modality: str = ""
    anatomy: str = ""
    organ: str = ""


@dataclass
class DiceRow:
    image_id: str
    mask_id: str
    modality: str
    anatomy: str
    organ: str
    protocol: str
    dice: float


@dataclass
class DiceReport:
    rows: list[DiceRow] = field(default_factory=list)
    metadata: dict = field(default_factory=lambda: {"both_empty_dice": 1.0})

    def mean_dice(self) -> float:
        return float(np.mean([r.dice for r in self.rows]))

    def to_json(self) -> dict:
        return {"metadata": self.metadata,
                "rows": [r.__dict__ for r in self.rows],
                "aggregates": {key: aggregate(self, key) for key in
                               ("modality", "anatomy", "organ", "overall")}}

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2)


def dice_score(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|P∩G| / (|P|+|G|); 1.0 when both masks are empty, 0.0 when exactly one is."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    p, g = int(pred.sum()), int(gt.sum())
    if p + g == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pred, gt).sum()) / (p + g)


def _predict(model: SegModel, emb: torch.Tensor, pset: ps.PromptSet) -> DecoderOutput:
    with torch.no_grad():
        return model.decode(emb, pset)


def evaluate_sample(model: SegModel, sample: EvalSample, protocol: EvalProtocol,
                    rng: np.random.Generator) -> float:
    """Dice of one interactive run. Candidate selection uses the model's own
    predicted IoU; ground truth never informs the choice."""
    if sample.image.shape[0] != model.input_size:
        raise ValueError(
            f"sample resolution {sample.image.shape} != model input {model.input_size}")
    model.eval()
    with torch.no_grad():
        emb = model.encode_image(sample.image)

    if protocol.mode == "bbox":
        pset = ps.PromptSet(box=ps.tight_bbox(sample.gt))
        out = _predict(model, emb, pset)
        pred = out.binary_masks()[out.best_index()]
        return dice_score(pred, sample.gt)

    x, y = ps._sample_pixel(sample.gt, rng)
    pset = ps.PromptSet(points=[ps.PointPrompt(x, y, ps.FOREGROUND)])
    out = _predict(model, emb, pset)
    best = out.best_index()
    pred = out.binary_masks()[best]
    for _ in range(protocol.num_points - 1):
        extra = ps.sample_correction_points(pred, sample.gt, 1, rng)
        pset.points.extend(extra)
        pset.dense = ps.DensePrompt(out.low_res_logits[best].numpy().astype(np.float64))
        out = _predict(model, emb, pset)
        best = out.best_index()
        pred = out.binary_masks()[best]
    return dice_score(pred, sample.gt)


def evaluate(model: SegModel, samples: list[EvalSample], protocol: EvalProtocol) -> DiceReport:
    """Run the protocol over a split; deterministic under (seed, state, split, protocol)."""
    if not samples:
        raise ValueError("empty evaluation split")
    if protocol.adapters == "remove":
        model = remove_adapters(model)
    report = DiceReport()
    for i, sample in enumerate(samples):
        rng = np.random.default_rng([protocol.seed, i])
        d = evaluate_sample(model, sample, protocol, rng)
        report.rows.append(DiceRow(sample.image_id, sample.mask_id, sample.modality,
                                   sample.anatomy, sample.organ, protocol.label(), d))
    return report


def aggregate(report: DiceReport, key: str) -> dict:
    """Per-group mean Dice and mask counts; 'overall' adds the count-weighted mean."""
    if not report.rows:
        raise ValueError("empty report")
    if key == "overall":
        groups: dict[str, list[float]] = {"overall": [r.dice for r in report.rows]}
    elif key in ("modality", "anatomy", "organ"):
        groups = {}
        for r in report.rows:
            groups.setdefault(getattr(r, key) or "unlabeled", []).append(r.dice)
    else:
        raise ValueError(f"unknown aggregation key {key!r}")
    table = {name: {"count": len(v), "mean_dice": float(np.mean(v))}
             for name, v in sorted(groups.items())}
    total = sum(t["count"] for t in table.values())
    weighted = sum(t["count"] * t["mean_dice"] for t in table.values()) / total
    table["_weighted_average"] = {"count": total, "mean_dice": float(weighted)}
    return table


def aggregate_csv(report: DiceReport, key: str) -> str:
    """Aggregate table as CSV: group, count, mean Dice."""
    table = aggregate(report, key)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow([key, "mask_count", "mean_dice"])
    for name, row in table.items():
        writer.writerow([name, row["count"], f"{row['mean_dice']:.4f}"])
    return buf.getvalue()


def compare_adapter_modes(model: SegModel, samples: list[EvalSample],
                          protocol: EvalProtocol) -> dict:
    """Paired keep-vs-remove evaluation on identical prompt seeds."""
    keep = EvalProtocol(protocol.mode, protocol.num_points, protocol.resolution,
                        "keep", protocol.seed)
    drop = EvalProtocol(protocol.mode, protocol.num_points, protocol.resolution,
                        "remove", protocol.seed)
    report_keep = evaluate(model, samples, keep)
    report_drop = evaluate(model, samples, drop)
    pairs = [{"mask_id": a.mask_id, "dice_keep": a.dice, "dice_remove": b.dice,
              "delta": b.dice - a.dice}
             for a, b in zip(report_keep.rows, report_drop.rows)]
    return {"keep": report_keep, "remove": report_drop, "pairs": pairs,
            "aggregates": {"keep": aggregate(report_keep, "overall"),
                           "remove": aggregate(report_drop, "overall")}}


def measure_throughput(model: SegModel, n_warmup: int = 2, n_timed: int = 10,
                       seed: int = 0) -> dict:
    """Single-image forward passes per second on local hardware."""
    if n_timed < 1:
        raise ValueError("n_timed must be >= 1")
    s = model.input_size
    rng = np.random.default_rng(seed)
    image = rng.integers(0, 256, (s, s), dtype=np.uint8)
    pset = ps.PromptSet(box=ps.BoxPrompt(s // 4, s // 4, 3 * s // 4, 3 * s // 4))
    model.eval()
    with torch.no_grad():
        for _ in range(n_warmup):
            model.forward(image, pset)
        t0 = time.perf_counter()
        for _ in range(n_timed):
            model.forward(image, pset)
        elapsed = time.perf_counter() - t0
    return {"fps": n_timed / elapsed, "resolution": s,
            "hardware": f"{platform.machine()} {platform.processor() or 'cpu'}",
            "n_timed": n_timed}
