"""Checkpoint archive: named tensors in an npz plus a JSON header.

The header records the model config and the parameter-group membership of
every tensor, so freeze rules and adapter removal round-trip exactly.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

from .network import ModelConfig, SegModel, group_of

FORMAT_VERSION = 1


def save_checkpoint(model: SegModel, path: str | Path) -> None:
    state = model.state_dict()
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_json(),
        "groups": {name: group_of(name) for name in state},
        "dtype": str(model._dtype()).removeprefix("torch."),
    }
    arrays = {name: t.detach().cpu().numpy() for name, t in state.items()}
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("header.json", json.dumps(header, indent=2))
        zf.writestr("tensors.npz", buf.getvalue())


def load_checkpoint(path: str | Path) -> SegModel:
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        if header["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {header['format_version']}")
        npz = np.load(io.BytesIO(zf.read("tensors.npz")))
        dtype = getattr(torch, header.get("dtype", "float32"))
        model = SegModel(ModelConfig.from_json(header["config"])).to(dtype)
        state = {name: torch.as_tensor(npz[name]) for name in npz.files}
        # verify group membership survived the round trip
        for name in state:
            expected = header["groups"].get(name)
            if expected != group_of(name):
                raise ValueError(f"group mismatch for {name}: header says {expected}")
        model.load_state_dict(state)
        return model
