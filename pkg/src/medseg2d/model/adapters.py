"""Per-block adapter layers for the frozen image encoder.

Each adapter recalibrates channels with a squeeze-excite style sigmoid gate,
then runs a downsample/upsample spatial branch, and adds the result back to
its input. The spatial branch's transposed convolution is zero-initialized so
a freshly constructed adapter is an exact identity.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F


class AdapterLayer(nn.Module):
    def __init__(self, channels: int, compress_ratio: float = 0.25):
        super().__init__()
        hidden = channels * compress_ratio
        if hidden != int(hidden) or hidden < 1:
            raise ValueError(
                f"channels * compress_ratio must be a positive integer, got {hidden}")
        hidden = int(hidden)
        self.gate_down = nn.Linear(channels, hidden)
        self.gate_up = nn.Linear(hidden, channels)
        self.down_conv = nn.Conv2d(channels, channels, kernel_size=3, stride=2, padding=1)
        self.up_conv = nn.ConvTranspose2d(channels, channels, kernel_size=2, stride=2)
        # start as identity: the residual branch outputs exactly zero
        nn.init.zeros_(self.up_conv.weight)
        nn.init.zeros_(self.up_conv.bias)

    def channel_gate(self, x: torch.Tensor) -> torch.Tensor:
        """Scale each channel by sigmoid(W2 relu(W1 GAP(x))). Input (B, C, H, W)."""
        g = x.mean(dim=(2, 3))
        s = torch.sigmoid(self.gate_up(F.relu(self.gate_down(g))))
        return x * s[:, :, None, None]

    def spatial_branch(self, x: torch.Tensor) -> torch.Tensor:
        """Halve the spatial resolution with a strided conv, then restore it."""
        if x.shape[-1] % 2 or x.shape[-2] % 2:
            raise ValueError(f"spatial adapter needs even dims, got {tuple(x.shape[-2:])}")
        return self.up_conv(F.gelu(self.down_conv(x)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.spatial_branch(self.channel_gate(x))
