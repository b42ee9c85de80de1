import math

import numpy as np
import pytest
import torch

from medseg2d.losses import (
    combined_loss, dice_loss, focal_loss, iou_loss, select_best_mask,
)


class TestFocalLoss:
    def test_saturated_correct(self):
        gt = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
        logits = torch.where(gt.bool(), torch.tensor(20.0), torch.tensor(-20.0))
        assert focal_loss(logits, gt).item() < 1e-6

    def test_gamma_zero_is_scaled_bce(self):
        torch.manual_seed(0)
        logits = torch.randn(8, 8, dtype=torch.float64)
        gt = (torch.rand(8, 8) > 0.5).double()
        got = focal_loss(logits, gt, gamma=0.0, alpha=0.5)
        bce = torch.nn.functional.binary_cross_entropy_with_logits(logits, gt)
        assert torch.allclose(got, 0.5 * bce)

    def test_single_pixel_unit_value(self):
        # logit 0, gt 1, gamma 2, alpha 0.25: 0.25 * 0.5^2 * ln 2
        got = focal_loss(torch.tensor([[0.0]], dtype=torch.float64),
                         torch.tensor([[1.0]], dtype=torch.float64))
        assert abs(got.item() - 0.25 * 0.25 * math.log(2)) < 1e-9

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            focal_loss(torch.tensor([[float("nan")]]), torch.tensor([[1.0]]))


class TestDiceLoss:
    def test_saturated_perfect(self):
        gt = torch.zeros(16, 16)
        gt[4:12, 4:12] = 1
        logits = torch.where(gt.bool(), torch.tensor(50.0), torch.tensor(-50.0))
        assert dice_loss(logits, gt).item() < 1e-6

    def test_all_background_prediction(self):
        gt = torch.zeros(16, 16, dtype=torch.float64)
        gt[0:4, 0:4] = 1  # area 16
        logits = torch.full((16, 16), -60.0, dtype=torch.float64)
        expected = 1 - 1 / (16 + 1)
        assert abs(dice_loss(logits, gt).item() - expected) < 1e-9

    def test_empty_gt_empty_pred(self):
        logits = torch.full((8, 8), -60.0)
        gt = torch.zeros(8, 8)
        assert abs(dice_loss(logits, gt).item()) < 1e-6


class TestIouLoss:
    def test_exact_predictions_zero(self):
        gt = torch.zeros(8, 8)
        gt[2:6, 2:6] = 1
        logits = torch.stack([torch.where(gt.bool(), 10.0, -10.0)] * 3)
        actual_iou = 1.0
        pred = torch.full((3,), actual_iou)
        assert iou_loss(pred, logits, gt).item() < 1e-12

    def test_all_empty_predictions(self):
        gt = torch.zeros(8, 8)
        gt[1:3, 1:3] = 1
        logits = torch.full((3, 8, 8), -10.0)
        pred = torch.ones(3)
        assert abs(iou_loss(pred, logits, gt).item() - 1.0) < 1e-12

    def test_permutation_invariance(self):
        torch.manual_seed(1)
        gt = (torch.rand(8, 8) > 0.5).float()
        logits = torch.randn(3, 8, 8)
        pred = torch.rand(3)
        perm = torch.tensor([2, 0, 1])
        assert torch.allclose(iou_loss(pred, logits, gt),
                              iou_loss(pred[perm], logits[perm], gt))


class TestSelectBestMask:
    def _logits_with_ious(self, gt):
        # candidate 0: empty, candidate 1: exact, candidate 2: half overlap
        exact = torch.where(gt.bool(), 10.0, -10.0)
        half = torch.full_like(gt, -10.0)
        half[2:4, 2:6] = 10.0
        empty = torch.full_like(gt, -10.0)
        return torch.stack([empty, exact, half])

    def test_argmax(self):
        gt = torch.zeros(8, 8)
        gt[2:6, 2:6] = 1
        assert select_best_mask(self._logits_with_ious(gt), gt) == 1

    def test_tie_breaks_low_index(self):
        gt = torch.zeros(8, 8)
        gt[2:6, 2:6] = 1
        exact = torch.where(gt.bool(), 10.0, -10.0)
        logits = torch.stack([exact, exact, exact])
        assert select_best_mask(logits, gt) == 0

    def test_empty_gt_rejected(self):
        with pytest.raises(ValueError):
            select_best_mask(torch.zeros(3, 4, 4), torch.zeros(4, 4))

    def test_gradient_zero_for_unselected(self):
        torch.manual_seed(2)
        gt = torch.zeros(8, 8, dtype=torch.float64)
        gt[2:6, 2:6] = 1
        logits = self._logits_with_ious(gt).double().requires_grad_(True)
        total, report = combined_loss(logits, torch.rand(3, dtype=torch.float64), gt)
        total.backward()
        assert report.selected_mask_index == 1
        # candidates 0 and 2 get no mask-loss gradient (iou loss detaches logits)
        assert logits.grad[0].abs().sum() == 0
        assert logits.grad[2].abs().sum() == 0
        assert logits.grad[1].abs().sum() > 0


class TestCombinedLoss:
    def test_total_assembly(self):
        torch.manual_seed(3)
        gt = torch.zeros(8, 8, dtype=torch.float64)
        gt[1:5, 1:5] = 1
        logits = torch.randn(3, 8, 8, dtype=torch.float64)
        iou_pred = torch.rand(3, dtype=torch.float64)
        total, r = combined_loss(logits, iou_pred, gt, focal_weight=20.0,
                                 dice_weight=1.0, iou_weight=1.0)
        assert abs(r.total - (20 * r.focal + r.dice + r.iou_mse)) < 1e-12
        assert abs(total.item() - r.total) < 1e-12
        assert r.selected_mask_index in (0, 1, 2)

    def test_all_parts_finite(self):
        gt = torch.zeros(8, 8)
        gt[0, 0] = 1
        logits = torch.full((3, 8, 8), 100.0)
        _, r = combined_loss(logits, torch.ones(3), gt)
        for v in (r.focal, r.dice, r.iou_mse, r.total):
            assert np.isfinite(v)
