"""Sparse (point/box) and dense (mask) prompt embedding."""

from __future__ import annotations

import math

import torch
from torch import nn

from ..prompts import BoxPrompt, FOREGROUND, PointPrompt
from .encoder import PROMPT_EMBED_DIM


class FourierPositionEncoding(nn.Module):
    """Frozen random Gaussian Fourier features mapping (x, y) in [0,1]^2 to 256-d."""

    def __init__(self, num_feats: int = PROMPT_EMBED_DIM // 2, scale: float = 1.0):
        super().__init__()
        self.register_buffer("gaussian", scale * torch.randn(2, num_feats))

    def encode(self, coords: torch.Tensor) -> torch.Tensor:
        """coords (..., 2) in [0,1] -> (..., 2*num_feats)."""
        c = 2.0 * coords - 1.0
        c = 2.0 * math.pi * (c @ self.gaussian)
        return torch.cat([torch.sin(c), torch.cos(c)], dim=-1)

    def grid(self, h: int, w: int) -> torch.Tensor:
        """Positional encoding of pixel centers on an h x w grid -> (2*num_feats, h, w)."""
        dtype, device = self.gaussian.dtype, self.gaussian.device
        y = (torch.arange(h, dtype=dtype, device=device) + 0.5) / h
        x = (torch.arange(w, dtype=dtype, device=device) + 0.5) / w
        coords = torch.stack(torch.meshgrid(y, x, indexing="ij"), dim=-1)[..., [1, 0]]
        return self.encode(coords).permute(2, 0, 1)


class PromptEncoder(nn.Module):
    """Maps prompts to 256-d embeddings: one vector per point, two per box, and a
    dense grid from low-resolution mask logits (or a learned no-mask default)."""

    # indices into point_embeddings
    FG, BG, TOP_LEFT, BOTTOM_RIGHT = 0, 1, 2, 3

    def __init__(self, input_size: int, grid_size: int):
        super().__init__()
        self.input_size = input_size
        self.grid_size = grid_size
        self.pe = FourierPositionEncoding()
        self.point_embeddings = nn.Embedding(4, PROMPT_EMBED_DIM)
        self.no_mask_embed = nn.Embedding(1, PROMPT_EMBED_DIM)
        c = PROMPT_EMBED_DIM
        self.mask_downscale = nn.Sequential(
            nn.Conv2d(1, c // 4, kernel_size=2, stride=2),
            nn.GELU(),
            nn.Conv2d(c // 4, c // 16, kernel_size=2, stride=2),
            nn.GELU(),
            nn.Conv2d(c // 16, c, kernel_size=1),
        )

    def _pe_point(self, x: float, y: float) -> torch.Tensor:
        s = self.input_size
        coords = torch.tensor([x / s, y / s], dtype=self.pe.gaussian.dtype,
                              device=self.pe.gaussian.device)
        return self.pe.encode(coords)

    def encode_points(self, points: list[PointPrompt]) -> torch.Tensor:
        """(N, 256): positional encoding plus the learned fg/bg embedding."""
        out = []
        for p in points:
            if not (0 <= p.x < self.input_size and 0 <= p.y < self.input_size):
                raise ValueError(f"point ({p.x}, {p.y}) outside {self.input_size}px input")
            idx = self.FG if p.label == FOREGROUND else self.BG
            out.append(self._pe_point(p.x, p.y) + self.point_embeddings.weight[idx])
        if not out:
            return self.point_embeddings.weight.new_zeros((0, PROMPT_EMBED_DIM))
        return torch.stack(out)

    def encode_box(self, box: BoxPrompt) -> torch.Tensor:
        """(2, 256): positional encodings of the two corners plus corner-role embeddings."""
        return torch.stack([
            self._pe_point(box.x0, box.y0) + self.point_embeddings.weight[self.TOP_LEFT],
            self._pe_point(box.x1, box.y1) + self.point_embeddings.weight[self.BOTTOM_RIGHT],
        ])

    def encode_dense(self, mask_logits: torch.Tensor | None) -> torch.Tensor:
        """(1, 256, g, g) dense embedding from quarter-resolution logits.

        Logits are squashed to [0, 1] first; with no mask the learned no-mask
        embedding is broadcast over the grid.
        """
        g = self.grid_size
        if mask_logits is None:
            return self.no_mask_embed.weight.reshape(1, -1, 1, 1).expand(1, -1, g, g)
        expected = (4 * g, 4 * g)
        if mask_logits.shape[-2:] != expected:
            raise ValueError(f"dense prompt must be {expected}, got {tuple(mask_logits.shape[-2:])}")
        m = torch.sigmoid(mask_logits.reshape(1, 1, *expected))
        out = self.mask_downscale(m)
        if out.shape[-2:] != (g, g):
            raise ValueError(f"dense embedding came out {tuple(out.shape[-2:])}, expected {(g, g)}")
        return out

    def forward(self, points: list[PointPrompt], box: BoxPrompt | None,
                dense_logits: torch.Tensor | None) -> tuple[torch.Tensor, torch.Tensor]:
        sparse = self.encode_points(points)
        if box is not None:
            sparse = torch.cat([sparse, self.encode_box(box)])
        return sparse, self.encode_dense(dense_logits)
