"""The full promptable segmentation network and its parameter-group bookkeeping."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from ..prompts import PromptSet
from .decoder import NUM_MASK_CANDIDATES, MaskDecoder
from .encoder import EncoderConfig, ImageEncoder, standardize_pixels
from .prompt_encoder import PromptEncoder

PARAMETER_GROUPS = ("encoder_base", "adapters", "prompt_encoder", "mask_decoder")
TRAINABLE_GROUPS = ("adapters", "prompt_encoder", "mask_decoder")


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder_num_heads: int = 8
    decoder_depth: int = 2

    def to_json(self) -> dict:
        return {"encoder": asdict(self.encoder),
                "decoder_num_heads": self.decoder_num_heads,
                "decoder_depth": self.decoder_depth}

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        return cls(encoder=EncoderConfig(**d["encoder"]),
                   decoder_num_heads=d["decoder_num_heads"],
                   decoder_depth=d["decoder_depth"])


@dataclass
class DecoderOutput:
    mask_logits: torch.Tensor  # (3, S, S)
    iou_pred: torch.Tensor  # (3,)
    low_res_logits: torch.Tensor  # (3, S/4, S/4)

    def best_index(self) -> int:
        """Candidate preferred by the model's own IoU head."""
        return int(torch.argmax(self.iou_pred).item())

    def binary_masks(self) -> np.ndarray:
        """(3, S, S) bool, thresholded at logit 0."""
        return (self.mask_logits.detach().cpu().numpy() > 0)


def group_of(param_name: str) -> str:
    """Parameter-group membership by qualified name; every tensor has exactly one."""
    if param_name.startswith("image_encoder.adapters"):
        return "adapters"
    if param_name.startswith("image_encoder."):
        return "encoder_base"
    if param_name.startswith("prompt_encoder."):
        return "prompt_encoder"
    if param_name.startswith("mask_decoder."):
        return "mask_decoder"
    raise KeyError(f"tensor {param_name!r} belongs to no group")


def parameter_groups(model: "SegModel") -> dict[str, list[tuple[str, nn.Parameter]]]:
    groups: dict[str, list[tuple[str, nn.Parameter]]] = {g: [] for g in PARAMETER_GROUPS}
    for name, p in model.named_parameters():
        groups[group_of(name)].append((name, p))
    return groups


class SegModel(nn.Module):
    """Adapter-augmented encoder + prompt encoder + mask decoder.

    The encoder base (everything in the image encoder except the adapters) is
    frozen at construction; adapters, prompt encoder, and mask decoder train.
    """

    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = config or ModelConfig()
        enc = self.config.encoder
        self.image_encoder = ImageEncoder(enc)
        self.prompt_encoder = PromptEncoder(enc.input_size, enc.grid_size)
        self.mask_decoder = MaskDecoder(enc.input_size, self.config.decoder_num_heads,
                                        self.config.decoder_depth)
        for name, p in self.named_parameters():
            if group_of(name) == "encoder_base":
                p.requires_grad_(False)
        # instrumentation for the embed-once-per-session contract
        self.encoder_invocations = 0

    @property
    def input_size(self) -> int:
        return self.config.encoder.input_size

    @property
    def dense_shape(self) -> tuple[int, int]:
        q = self.input_size // 4
        return (q, q)

    def _dtype(self) -> torch.dtype:
        return self.image_encoder.patch_embed.weight.dtype

    def encode_image(self, image: np.ndarray) -> torch.Tensor:
        """uint8 (S, S) or (S, S, 3) -> cached-able embedding (1, 256, S/16, S/16)."""
        self.encoder_invocations += 1
        x = standardize_pixels(image, dtype=self._dtype())
        return self.image_encoder(x)

    def decode(self, image_emb: torch.Tensor, prompt_set: PromptSet) -> DecoderOutput:
        dense = None
        if prompt_set.dense is not None:
            dense = torch.as_tensor(prompt_set.dense.logits, dtype=self._dtype())
        sparse_emb, dense_emb = self.prompt_encoder(prompt_set.points, prompt_set.box, dense)
        g = self.config.encoder.grid_size
        image_pe = self.prompt_encoder.pe.grid(g, g)
        masks, iou_pred, low_res = self.mask_decoder(image_emb, image_pe, sparse_emb, dense_emb)
        return DecoderOutput(masks[0], iou_pred[0], low_res[0])

    def forward(self, image: np.ndarray, prompt_set: PromptSet) -> DecoderOutput:
        return self.decode(self.encode_image(image), prompt_set)

    def predict(self, image: np.ndarray, prompt_set: PromptSet) -> DecoderOutput:
        """Inference convenience: eval mode, no gradients."""
        self.eval()
        with torch.no_grad():
            return self.forward(image, prompt_set)


def remove_adapters(model: SegModel) -> SegModel:
    """Structurally drop the adapter layers.

    The result forwards bit-identically to a model constructed with
    adapters_enabled=False and the same base/prompt/decoder weights.
    Idempotent: removing twice equals removing once.
    """
    enc = model.config.encoder
    cfg = ModelConfig(
        encoder=EncoderConfig(
            input_size=enc.input_size, patch_size=enc.patch_size,
            embed_dim=enc.embed_dim, depth=enc.depth, num_heads=enc.num_heads,
            adapter_compress_ratio=enc.adapter_compress_ratio, adapters_enabled=False),
        decoder_num_heads=model.config.decoder_num_heads,
        decoder_depth=model.config.decoder_depth)
    stripped = SegModel(cfg).to(model._dtype())
    state = {k: v for k, v in model.state_dict().items()
             if not k.startswith("image_encoder.adapters")}
    stripped.load_state_dict(state)
    return stripped
