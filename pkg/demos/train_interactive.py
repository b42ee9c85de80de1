"""Train a small model with simulated interactive prompting.

Each training step walks 9 interaction iterations: the first uses a point or
a jittered box, later ones add correction clicks sampled from the error
region plus the previous prediction as a dense prompt. Watch the per
iteration losses fall as the rounds refine the mask.
"""

import tempfile
from pathlib import Path

import numpy as np
import torch

from medseg2d.model import ModelConfig, SegModel
from medseg2d.model.encoder import EncoderConfig
from medseg2d.synthetic import shapes_dataset
from medseg2d.training import TrainConfig, lr_at, run_training

torch.manual_seed(0)

config = ModelConfig(EncoderConfig(input_size=64, patch_size=8, embed_dim=64,
                                   depth=2, num_heads=4))
model = SegModel(config)
n_params = sum(p.numel() for p in model.parameters())
n_train = sum(p.numel() for p in model.parameters() if p.requires_grad)
print(f"model: {n_params} parameters, {n_train} trainable "
      f"({100 * n_train / n_params:.0f}%, the encoder backbone is frozen)")

data = shapes_dataset(np.random.default_rng(0), n_images=8, size=64)
train_cfg = TrainConfig(lr=1e-3, epochs=3, batch_size=4, masks_per_image=2, seed=0)

out_dir = Path(tempfile.mkdtemp(prefix="medseg2d_train_"))
metrics = run_training(data, model, train_cfg, out_dir=out_dir)

# the schedule halves the lr at the configured epochs
for epoch in (1, 2, 3):
    print(f"epoch {epoch}: lr {lr_at(epoch, train_cfg):.1e}")

first, last = metrics[0], metrics[-1]
print(f"\nfirst step, loss per interaction round:")
print("  " + " ".join(f"{v:.2f}" for v in first["iteration_losses"]))
print(f"last step, loss per interaction round:")
print("  " + " ".join(f"{v:.2f}" for v in last["iteration_losses"]))

ckpts = sorted(p.name for p in out_dir.glob("*.ckpt"))
print(f"\ncheckpoints: {ckpts}")
print(f"metrics log: {out_dir / 'metrics.jsonl'}")
