import numpy as np
import pytest
import torch

from medseg2d.model import ModelConfig, SegModel, parameter_groups
from medseg2d.model.encoder import EncoderConfig
from medseg2d.training import (
    TrainConfig, duplicate_to_count, lr_at, make_optimizer, run_training, train_step,
)

TOY = ModelConfig(EncoderConfig(input_size=64, patch_size=16, embed_dim=32,
                                depth=2, num_heads=4))


def toy_model(seed=0):
    torch.manual_seed(seed)
    return SegModel(TOY)


def toy_batch(n=2, seed=0):
    rng = np.random.default_rng(seed)
    batch = []
    for _ in range(n):
        img = rng.integers(0, 256, (64, 64), dtype=np.uint8)
        gt = np.zeros((64, 64), bool)
        y, x = rng.integers(5, 30, 2)
        gt[y:y + 20, x:x + 25] = True
        batch.append((img, gt))
    return batch


def snapshot(model):
    groups = parameter_groups(model)
    return {g: [p.detach().clone() for _, p in ps] for g, ps in groups.items()}


def changed_groups(model, snap):
    groups = parameter_groups(model)
    out = set()
    for g, params in groups.items():
        for before, (_, p) in zip(snap[g], params):
            if not torch.equal(before, p.detach()):
                out.add(g)
                break
    return out


class TestLrAt:
    def test_default_schedule_values(self):
        cfg = TrainConfig()
        assert lr_at(1, cfg) == 1e-4
        assert lr_at(7, cfg) == 5e-5
        assert lr_at(12, cfg) == 2.5e-5

    def test_between_drops(self):
        cfg = TrainConfig()
        assert lr_at(6, cfg) == 1e-4
        assert lr_at(9, cfg) == 5e-5
        assert lr_at(10, cfg) == 2.5e-5


class TestTrainConfig:
    def test_rejects_nonpositive_weights(self):
        with pytest.raises(ValueError):
            TrainConfig(focal_weight=0)
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_json_roundtrip(self):
        cfg = TrainConfig(lr=3e-4, lr_drop_epochs=(2, 5), seed=9)
        assert TrainConfig.from_json(cfg.to_json()) == cfg


class TestTrainStep:
    def test_nine_reports_per_sample(self):
        model = toy_model()
        cfg = TrainConfig()
        opt = make_optimizer(model, cfg)
        reports = train_step(toy_batch(2), model, opt, cfg, np.random.default_rng(0))
        assert len(reports) == 2
        assert all(len(r) == 9 for r in reports)

    def test_encoder_base_bit_identical(self):
        model = toy_model()
        cfg = TrainConfig(lr=1e-3)
        opt = make_optimizer(model, cfg)
        snap = snapshot(model)
        rng = np.random.default_rng(1)
        for _ in range(3):
            train_step(toy_batch(2), model, opt, cfg, rng)
        assert "encoder_base" not in changed_groups(model, snap)

    def test_all_trainable_groups_move(self):
        model = toy_model()
        cfg = TrainConfig(lr=1e-3)
        opt = make_optimizer(model, cfg)
        snap = snapshot(model)
        train_step(toy_batch(2), model, opt, cfg, np.random.default_rng(2))
        assert changed_groups(model, snap) == {"adapters", "prompt_encoder", "mask_decoder"}

    def test_iterations_after_first_touch_decoder_only(self, monkeypatch):
        # freeze the first iteration's step so any later change must come from 2..9
        from medseg2d import training as tr
        model = toy_model()
        cfg = TrainConfig(lr=1e-3)
        opt = make_optimizer(model, cfg)
        real_step = tr._step_groups
        calls = []

        def spy(m, o, groups):
            calls.append(set(groups))
            if len(calls) == 1:
                o.zero_grad(set_to_none=True)  # suppress the iteration-1 update
                return
            real_step(m, o, groups)

        monkeypatch.setattr(tr, "_step_groups", spy)
        snap = snapshot(model)
        tr.train_step(toy_batch(1), model, opt, cfg, np.random.default_rng(3))
        assert calls[0] == {"adapters", "prompt_encoder", "mask_decoder"}
        assert all(c == {"mask_decoder"} for c in calls[1:])
        assert len(calls) == 9
        assert changed_groups(model, snap) == {"mask_decoder"}

    def test_empty_gt_skipped(self, caplog):
        model = toy_model()
        cfg = TrainConfig()
        opt = make_optimizer(model, cfg)
        batch = toy_batch(1) + [(np.zeros((64, 64), np.uint8), np.zeros((64, 64), bool))]
        reports = train_step(batch, model, opt, cfg, np.random.default_rng(4))
        assert len(reports) == 1

    def test_all_empty_batch(self):
        model = toy_model()
        cfg = TrainConfig()
        opt = make_optimizer(model, cfg)
        batch = [(np.zeros((64, 64), np.uint8), np.zeros((64, 64), bool))]
        assert train_step(batch, model, opt, cfg, np.random.default_rng(5)) == []

    def test_total_is_weighted_sum(self):
        model = toy_model()
        cfg = TrainConfig(focal_weight=20.0, dice_weight=1.0, iou_loss_weight=1.0)
        opt = make_optimizer(model, cfg)
        reports = train_step(toy_batch(1), model, opt, cfg, np.random.default_rng(6))
        for r in reports[0]:
            assert abs(r.total - (20 * r.focal + r.dice + r.iou_mse)) < 1e-4

    def test_dense_prompt_is_detached(self):
        # the dense prompt entering iteration t+1 must be plain data
        model = toy_model()
        cfg = TrainConfig()
        opt = make_optimizer(model, cfg)
        captured = []
        original = model.decode

        def spy(emb, pset):
            if pset.dense is not None:
                captured.append(pset.dense.logits)
            return original(emb, pset)

        model.decode = spy
        train_step(toy_batch(1), model, opt, cfg, np.random.default_rng(7))
        assert captured, "iterations 2..9 must carry a dense prompt"
        assert all(isinstance(d, np.ndarray) for d in captured)


class TestDuplicateToCount:
    def test_enough_masks_no_duplicates(self):
        masks = [np.ones((2, 2), bool) * i for i in range(8)]
        out = duplicate_to_count(masks, 5, np.random.default_rng(0))
        assert len(out) == 5

    def test_fewer_masks_duplicated(self):
        masks = [np.zeros((2, 2), bool), np.ones((2, 2), bool)]
        out = duplicate_to_count(masks, 5, np.random.default_rng(1))
        assert len(out) == 5
        # every original mask appears at least once
        assert any(m.all() for m in out) and any(not m.any() for m in out)


class TestRunTraining:
    def test_metrics_and_checkpoints(self, tmp_path):
        model = toy_model()
        samples = [(img, [gt]) for img, gt in toy_batch(3)]
        cfg = TrainConfig(epochs=2, batch_size=2, masks_per_image=2, seed=1)
        metrics = run_training(samples, model, cfg, out_dir=tmp_path)
        assert (tmp_path / "epoch_001.ckpt").exists()
        assert (tmp_path / "epoch_002.ckpt").exists()
        assert (tmp_path / "metrics.jsonl").exists()
        assert all(len(m["iteration_losses"]) == 9 for m in metrics)
        assert metrics[0]["lr"] == cfg.lr

    def test_deterministic_under_seed(self):
        samples = [(img, [gt]) for img, gt in toy_batch(2)]
        cfg = TrainConfig(epochs=1, batch_size=2, masks_per_image=1, seed=5)
        m1 = run_training(samples, toy_model(1), cfg)
        m2 = run_training(samples, toy_model(1), cfg)
        assert m1 == m2

    def test_empty_training_set_rejected(self):
        with pytest.raises(ValueError):
            run_training([], toy_model(), TrainConfig())

    def test_max_optimizer_steps_bounds_run(self):
        samples = [(img, [gt]) for img, gt in toy_batch(4)]
        cfg = TrainConfig(epochs=100, batch_size=1, masks_per_image=1, seed=2)
        metrics = run_training(samples, toy_model(2), cfg, max_optimizer_steps=18)
        assert len(metrics) == 2  # two train_steps of 9 optimizer steps each
