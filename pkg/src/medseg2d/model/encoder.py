"""ViT image encoder with a frozen base and optional per-block adapters."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .adapters import AdapterLayer

PROMPT_EMBED_DIM = 256


@dataclass
class EncoderConfig:
    input_size: int = 256
    patch_size: int = 16
    embed_dim: int = 64
    depth: int = 2
    num_heads: int = 4
    adapter_compress_ratio: float = 0.25
    adapters_enabled: bool = True

    def __post_init__(self):
        if self.input_size % self.patch_size:
            raise ValueError(f"input_size {self.input_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.num_heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        hidden = self.embed_dim * self.adapter_compress_ratio
        if hidden != int(hidden) or hidden < 1:
            raise ValueError("embed_dim * adapter_compress_ratio must be a positive integer")

    @property
    def grid_size(self) -> int:
        return self.input_size // self.patch_size


class LayerNorm2d(nn.Module):
    """Channel-wise LayerNorm over (B, C, H, W)."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mu = x.mean(1, keepdim=True)
        var = (x - mu).pow(2).mean(1, keepdim=True)
        x = (x - mu) / torch.sqrt(var + self.eps)
        return self.weight[:, None, None] * x + self.bias[:, None, None]


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, self.head_dim)
        q, k, v = qkv.permute(2, 0, 3, 1, 4).unbind(0)
        attn = torch.softmax(q @ k.transpose(-2, -1) / self.head_dim ** 0.5, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, num_heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class ImageEncoder(nn.Module):
    """Patchify, run Transformer blocks (each followed by an adapter when enabled),
    and project to the shared embedding width at 1/16 of the input resolution."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        g, c = config.grid_size, config.embed_dim
        self.patch_embed = nn.Conv2d(3, c, kernel_size=config.patch_size, stride=config.patch_size)
        self.pos_embed = nn.Parameter(torch.zeros(1, g * g, c))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            TransformerBlock(c, config.num_heads) for _ in range(config.depth))
        if config.adapters_enabled:
            self.adapters = nn.ModuleList(
                AdapterLayer(c, config.adapter_compress_ratio) for _ in range(config.depth))
        else:
            self.adapters = None
        self.neck = nn.Sequential(
            nn.Conv2d(c, PROMPT_EMBED_DIM, kernel_size=1, bias=False),
            LayerNorm2d(PROMPT_EMBED_DIM),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 3, S, S) standardized pixels -> (B, 256, S/16, S/16)."""
        s = self.config.input_size
        if x.shape[-2:] != (s, s):
            raise ValueError(f"expected {s}x{s} input, got {tuple(x.shape[-2:])}")
        g = self.config.grid_size
        x = self.patch_embed(x)  # (B, C, g, g)
        b, c = x.shape[0], x.shape[1]
        x = x.flatten(2).transpose(1, 2) + self.pos_embed
        for i, block in enumerate(self.blocks):
            x = block(x)
            if self.adapters is not None:
                grid = x.transpose(1, 2).reshape(b, c, g, g)
                grid = self.adapters[i](grid)
                x = grid.flatten(2).transpose(1, 2)
        grid = x.transpose(1, 2).reshape(b, c, g, g)
        return self.neck(grid)


def standardize_pixels(image, dtype=torch.float32, device=None) -> torch.Tensor:
    """uint8 (H, W) or (H, W, 3) array -> standardized (1, 3, H, W) tensor."""
    t = torch.as_tensor(image, device=device)
    if t.ndim == 2:
        t = t[..., None].expand(-1, -1, 3)
    if t.ndim != 3 or t.shape[-1] != 3:
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got {tuple(t.shape)}")
    t = t.permute(2, 0, 1)[None].to(dtype) / 255.0
    return (t - 0.5) / 0.5
