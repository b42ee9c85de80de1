"""Training losses: focal + dice on the best candidate, MSE on predicted IoU."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch.nn import functional as F

LOG_CLAMP = -100.0  # floor for log-probabilities, matches saturated logits ~ +-100
DICE_EPS = 1.0


@dataclass
class LossReport:
    focal: float
    dice: float
    iou_mse: float
    total: float
    selected_mask_index: int


def focal_loss(logits: torch.Tensor, gt: torch.Tensor,
               gamma: float = 2.0, alpha: float = 0.25) -> torch.Tensor:
    """Mean over pixels of -alpha_t (1 - p_t)^gamma log(p_t)."""
    if not torch.isfinite(logits).all():
        raise ValueError("non-finite logits in focal loss")
    gt = gt.to(logits.dtype)
    log_p = F.logsigmoid(logits).clamp(min=LOG_CLAMP)
    log_not_p = F.logsigmoid(-logits).clamp(min=LOG_CLAMP)
    log_pt = gt * log_p + (1 - gt) * log_not_p
    pt = torch.exp(log_pt)
    alpha_t = gt * alpha + (1 - gt) * (1 - alpha)
    return (-alpha_t * (1 - pt) ** gamma * log_pt).mean()


def dice_loss(logits: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """1 - (2 sum(p*g) + eps) / (sum(p) + sum(g) + eps) with eps = 1."""
    p = torch.sigmoid(logits)
    g = gt.to(logits.dtype)
    inter = (p * g).sum()
    return 1 - (2 * inter + DICE_EPS) / (p.sum() + g.sum() + DICE_EPS)


def _binary_iou(pred: torch.Tensor, gt: torch.Tensor) -> float:
    inter = (pred & gt).sum().item()
    union = (pred | gt).sum().item()
    return inter / union if union else 1.0


def iou_loss(iou_pred: torch.Tensor, mask_logits: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """MSE between predicted IoU and the actual IoU of each binarized candidate."""
    gt_b = gt.bool()
    actual = torch.tensor(
        [_binary_iou(mask_logits[i] > 0, gt_b) for i in range(mask_logits.shape[0])],
        dtype=iou_pred.dtype, device=iou_pred.device)
    return ((iou_pred - actual) ** 2).mean()


def select_best_mask(mask_logits: torch.Tensor, gt: torch.Tensor) -> int:
    """Index of the candidate with the highest actual IoU; ties go to the lowest index."""
    if not gt.any():
        raise ValueError("ground truth mask is empty")
    gt_b = gt.bool()
    ious = [_binary_iou(mask_logits[i] > 0, gt_b) for i in range(mask_logits.shape[0])]
    best = 0
    for i, v in enumerate(ious):
        if v > ious[best]:
            best = i
    return best


def combined_loss(mask_logits: torch.Tensor, iou_pred: torch.Tensor, gt: torch.Tensor,
                  focal_weight: float = 20.0, dice_weight: float = 1.0,
                  iou_weight: float = 1.0, gamma: float = 2.0, alpha: float = 0.25,
                  ) -> tuple[torch.Tensor, LossReport]:
    """Weighted sum over the best candidate's focal/dice plus the IoU-head MSE.

    Only the selected candidate's mask tokens receive mask-loss gradient; the
    IoU head is supervised on all three candidates.
    """
    idx = select_best_mask(mask_logits.detach(), gt)
    f = focal_loss(mask_logits[idx], gt, gamma, alpha)
    d = dice_loss(mask_logits[idx], gt)
    m = iou_loss(iou_pred, mask_logits.detach(), gt)
    total = focal_weight * f + dice_weight * d + iou_weight * m
    report = LossReport(f.item(), d.item(), m.item(), total.item(), idx)
    return total, report
