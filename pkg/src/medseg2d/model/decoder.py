"""Ambiguity-aware mask decoder: two-way cross-attention, three candidate masks,
and a predicted-IoU head."""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .encoder import PROMPT_EMBED_DIM, LayerNorm2d

NUM_MASK_CANDIDATES = 3


class CrossAttention(nn.Module):
    def __init__(self, dim: int, num_heads: int, downsample_rate: int = 1):
        super().__init__()
        self.inner = dim // downsample_rate
        self.num_heads = num_heads
        self.head_dim = self.inner // num_heads
        self.q_proj = nn.Linear(dim, self.inner)
        self.k_proj = nn.Linear(dim, self.inner)
        self.v_proj = nn.Linear(dim, self.inner)
        self.out_proj = nn.Linear(self.inner, dim)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, n, _ = x.shape
        return x.reshape(b, n, self.num_heads, self.head_dim).transpose(1, 2)

    def forward(self, q: torch.Tensor, k: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
        q, k, v = self._split(self.q_proj(q)), self._split(self.k_proj(k)), self._split(self.v_proj(v))
        attn = torch.softmax(q @ k.transpose(-2, -1) / self.head_dim ** 0.5, dim=-1)
        out = (attn @ v).transpose(1, 2).flatten(2)
        return self.out_proj(out)


class TwoWayBlock(nn.Module):
    """Token self-attention, tokens->image cross-attention, token MLP, then
    image->tokens cross-attention, each with residual + LayerNorm."""

    def __init__(self, dim: int, num_heads: int, mlp_dim: int = 512):
        super().__init__()
        self.self_attn = CrossAttention(dim, num_heads)
        self.norm1 = nn.LayerNorm(dim)
        self.cross_t2i = CrossAttention(dim, num_heads, downsample_rate=2)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, mlp_dim), nn.GELU(), nn.Linear(mlp_dim, dim))
        self.norm3 = nn.LayerNorm(dim)
        self.cross_i2t = CrossAttention(dim, num_heads, downsample_rate=2)
        self.norm4 = nn.LayerNorm(dim)

    def forward(self, tokens, image, token_pe, image_pe):
        q = tokens + token_pe
        tokens = self.norm1(tokens + self.self_attn(q, q, tokens))
        q, k = tokens + token_pe, image + image_pe
        tokens = self.norm2(tokens + self.cross_t2i(q, k, image))
        tokens = self.norm3(tokens + self.mlp(tokens))
        q, k = image + image_pe, tokens + token_pe
        image = self.norm4(image + self.cross_i2t(q, k, tokens))
        return tokens, image


class MLP(nn.Module):
    def __init__(self, in_dim: int, hidden: int, out_dim: int, depth: int, sigmoid_out: bool = False):
        super().__init__()
        dims = [in_dim] + [hidden] * (depth - 1) + [out_dim]
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(dims[:-1], dims[1:]))
        self.sigmoid_out = sigmoid_out

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.relu(x)
        return torch.sigmoid(x) if self.sigmoid_out else x


class MaskDecoder(nn.Module):
    def __init__(self, input_size: int, num_heads: int = 8, depth: int = 2):
        super().__init__()
        dim = PROMPT_EMBED_DIM
        self.input_size = input_size
        self.iou_token = nn.Embedding(1, dim)
        self.mask_tokens = nn.Embedding(NUM_MASK_CANDIDATES, dim)
        self.blocks = nn.ModuleList(TwoWayBlock(dim, num_heads) for _ in range(depth))
        self.final_t2i = CrossAttention(dim, num_heads, downsample_rate=2)
        self.final_norm = nn.LayerNorm(dim)
        self.upscale = nn.Sequential(
            nn.ConvTranspose2d(dim, dim // 4, kernel_size=2, stride=2),
            LayerNorm2d(dim // 4),
            nn.GELU(),
            nn.ConvTranspose2d(dim // 4, dim // 8, kernel_size=2, stride=2),
            nn.GELU(),
        )
        self.mask_hypernets = nn.ModuleList(
            MLP(dim, dim, dim // 8, 3) for _ in range(NUM_MASK_CANDIDATES))
        self.iou_head = MLP(dim, dim, NUM_MASK_CANDIDATES, 3, sigmoid_out=True)

    def forward(self, image_emb: torch.Tensor, image_pe: torch.Tensor,
                sparse_emb: torch.Tensor, dense_emb: torch.Tensor,
                ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns (mask_logits (B,3,S,S), iou_pred (B,3), low_res_logits (B,3,S/4,S/4))."""
        b = image_emb.shape[0]
        g = image_emb.shape[-1]
        output_tokens = torch.cat([self.iou_token.weight, self.mask_tokens.weight])
        output_tokens = output_tokens[None].expand(b, -1, -1)
        if sparse_emb.ndim == 2:
            sparse_emb = sparse_emb[None].expand(b, -1, -1)
        tokens = torch.cat([output_tokens, sparse_emb], dim=1)
        token_pe = tokens  # prompt embeddings double as token positional identity

        src = image_emb + dense_emb
        src = src.flatten(2).transpose(1, 2)  # (B, g*g, 256)
        pe = image_pe.flatten(1).transpose(0, 1)[None].expand(b, -1, -1)

        for block in self.blocks:
            tokens, src = block(tokens, src, token_pe, pe)
        q = tokens + token_pe
        tokens = self.final_norm(tokens + self.final_t2i(q, src + pe, src))

        iou_token_out = tokens[:, 0]
        mask_tokens_out = tokens[:, 1:1 + NUM_MASK_CANDIDATES]

        grid = src.transpose(1, 2).reshape(b, -1, g, g)
        upscaled = self.upscale(grid)  # (B, 32, 4g, 4g)
        hyper = torch.stack([
            self.mask_hypernets[i](mask_tokens_out[:, i])
            for i in range(NUM_MASK_CANDIDATES)], dim=1)  # (B, 3, 32)
        bsz, ch, hh, ww = upscaled.shape
        low_res = (hyper @ upscaled.reshape(bsz, ch, hh * ww)).reshape(bsz, -1, hh, ww)

        masks = F.interpolate(low_res, size=(self.input_size, self.input_size),
                              mode="bilinear", align_corners=False)
        iou_pred = self.iou_head(iou_token_out)
        return masks, iou_pred, low_res
