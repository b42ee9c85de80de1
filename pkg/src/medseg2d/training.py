"""Interactive fine-tuning: nine simulated-click iterations per batch.

Iteration 1 samples a fresh point-or-box prompt and updates adapters, prompt
encoder, and mask decoder; iterations 2..9 add correction clicks plus the
previous iteration's low-resolution logits as a dense prompt and update the
mask decoder only. One optimizer step per iteration.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import prompts as ps
from .losses import LossReport, combined_loss
from .model import SegModel, save_checkpoint
from .model.network import group_of

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    epochs: int = 12
    lr_drop_epochs: tuple[int, ...] = (7, 10)
    lr_drop_factor: float = 0.5
    focal_weight: float = 20.0
    dice_weight: float = 1.0
    iou_loss_weight: float = 1.0
    masks_per_image: int = 5
    iterations_per_batch: int = 9
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    batch_size: int = 4
    seed: int = 0

    def __post_init__(self):
        for name in ("lr", "focal_weight", "dice_weight", "iou_loss_weight", "lr_drop_factor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def to_json(self) -> dict:
        d = self.__dict__.copy()
        d["lr_drop_epochs"] = list(self.lr_drop_epochs)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lr_drop_epochs" in d:
            d["lr_drop_epochs"] = tuple(d["lr_drop_epochs"])
        return cls(**d)


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Learning rate for a 1-based epoch: halved at each configured drop epoch."""
    drops = sum(1 for e in config.lr_drop_epochs if e <= epoch)
    return config.lr * config.lr_drop_factor ** drops


def make_optimizer(model: SegModel, config: TrainConfig) -> torch.optim.Adam:
    trainable = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.Adam(trainable, lr=config.lr)


def _step_groups(model: SegModel, optimizer: torch.optim.Optimizer, groups: set[str]) -> None:
    """Step the optimizer on the scheduled groups only; other grads are dropped so
    neither values nor Adam moments move."""
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        if group_of(name) not in groups:
            p.grad = None
    optimizer.step()
    optimizer.zero_grad(set_to_none=True)


def train_step(batch: list[tuple[np.ndarray, np.ndarray]], model: SegModel,
               optimizer: torch.optim.Optimizer, config: TrainConfig,
               rng: np.random.Generator) -> list[list[LossReport]]:
    """One interactive pass over a batch of (image, gt mask) pairs.

    Returns one list of nine LossReports per surviving sample. Samples with an
    empty ground truth are skipped with a warning.
    """
    model.train()
    kept = []
    for image, gt in batch:
        if not gt.any():
            logger.warning("skipping sample with empty ground truth")
            continue
        kept.append((image, torch.as_tensor(np.ascontiguousarray(gt), dtype=torch.bool)))
    if not kept:
        return []

    schedule = ps.make_schedule(rng)
    n_iter = schedule.num_iterations
    dense_only = set(schedule.dense_only_iterations)

    states = []  # per-sample interaction state
    for image, gt in kept:
        first = ps.sample_initial_prompt(gt.numpy(), rng)
        pset = ps.PromptSet()
        if isinstance(first, ps.BoxPrompt):
            pset.box = first
        else:
            pset.points.append(first)
        states.append({"image": image, "gt": gt, "pset": pset, "prev_low_res": None})

    reports: list[list[LossReport]] = [[] for _ in kept]
    embeddings: list[torch.Tensor] = []

    for it in range(1, n_iter + 1):
        losses = []
        for i, st in enumerate(states):
            if it == 1:
                emb = model.encode_image(st["image"])  # grads flow into adapters
            else:
                emb = embeddings[i]
            if it > 1:
                pset = st["pset"]
                if it not in dense_only:
                    k = schedule.point_counts[it - 2]
                    corrections = ps.sample_correction_points(
                        st["prev_pred"], st["gt"].numpy(), k, rng)
                    pset.points.extend(corrections)
                pset.dense = ps.DensePrompt(st["prev_low_res"])
            out = model.decode(emb, st["pset"])
            total, report = combined_loss(
                out.mask_logits, out.iou_pred, st["gt"],
                config.focal_weight, config.dice_weight, config.iou_loss_weight,
                config.focal_gamma, config.focal_alpha)
            losses.append(total)
            reports[i].append(report)
            # the next iteration treats this prediction as data
            sel = report.selected_mask_index
            st["prev_low_res"] = out.low_res_logits[sel].detach().cpu().numpy()
            st["prev_pred"] = (out.mask_logits[sel].detach().cpu().numpy() > 0)

        torch.stack(losses).mean().backward()
        if it == 1:
            _step_groups(model, optimizer, {"adapters", "prompt_encoder", "mask_decoder"})
            # adapters just moved: rebuild embeddings once, detached, for iterations 2..9
            with torch.no_grad():
                embeddings = [model.encode_image(st["image"]) for st in states]
        else:
            _step_groups(model, optimizer, {"mask_decoder"})
    return reports


def duplicate_to_count(masks: list[np.ndarray], count: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Sample `count` masks, randomly duplicating when fewer are available."""
    if not masks:
        return []
    if len(masks) >= count:
        idx = rng.choice(len(masks), size=count, replace=False)
    else:
        idx = np.concatenate([np.arange(len(masks)),
                              rng.choice(len(masks), size=count - len(masks), replace=True)])
    return [masks[int(i)] for i in idx]


def run_training(samples: list[tuple[np.ndarray, list[np.ndarray]]], model: SegModel,
                 config: TrainConfig, out_dir: str | Path | None = None,
                 max_optimizer_steps: int | None = None) -> list[dict]:
    """Epoch loop over (image, masks) samples. Deterministic under config.seed.

    Emits a per-epoch checkpoint and a metrics log (one record per train_step)
    when out_dir is given. `max_optimizer_steps` bounds total optimizer steps,
    for budgeted runs.
    """
    if not samples:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    optimizer = make_optimizer(model, config)
    metrics: list[dict] = []
    out_path = Path(out_dir) if out_dir else None
    if out_path:
        out_path.mkdir(parents=True, exist_ok=True)
    opt_steps = 0
    done = False
    for epoch in range(1, config.epochs + 1):
        lr = lr_at(epoch, config)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = rng.permutation(len(samples))
        step = 0
        for start in range(0, len(order), config.batch_size):
            batch = []
            for j in order[start:start + config.batch_size]:
                image, masks = samples[int(j)]
                for gt in duplicate_to_count(masks, config.masks_per_image, rng):
                    batch.append((image, gt))
            reports = train_step(batch, model, optimizer, config, rng)
            opt_steps += config.iterations_per_batch
            step += 1
            if reports:
                iteration_losses = [
                    float(np.mean([r[t].total for r in reports]))
                    for t in range(config.iterations_per_batch)]
                metrics.append({"epoch": epoch, "step": step,
                                "iteration_losses": iteration_losses, "lr": lr})
            if max_optimizer_steps is not None and opt_steps >= max_optimizer_steps:
                done = True
                break
        if out_path:
            save_checkpoint(model, out_path / f"epoch_{epoch:03d}.ckpt")
        if done:
            break
    if out_path:
        with open(out_path / "metrics.jsonl", "w") as f:
            for m in metrics:
                f.write(json.dumps(m) + "\n")
    return metrics
