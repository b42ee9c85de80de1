"""Drive the inference service end to end without leaving the process.

A session uploads the image once and caches its embedding; every later
predict call reuses it, so clicking around an image never re-runs the
encoder. Masks travel as run-length encoded JSON.
"""

import io

import numpy as np
import torch
from fastapi.testclient import TestClient
from PIL import Image

from medseg2d.model import ModelConfig, SegModel
from medseg2d.model.encoder import EncoderConfig
from medseg2d.service import create_app, rle_decode

torch.manual_seed(2)
model = SegModel(ModelConfig(EncoderConfig(input_size=64, patch_size=8,
                                           embed_dim=64, depth=2, num_heads=4)))
client = TestClient(create_app(model))
print(client.get("/healthz").json())

# upload a 128x128 image; the service resizes and reports the transform
rng = np.random.default_rng(0)
pixels = rng.integers(0, 90, (128, 128), dtype=np.uint8)
pixels[30:90, 40:110] = 210
buf = io.BytesIO()
Image.fromarray(pixels).save(buf, format="PNG")
resp = client.post("/sessions", files={"image": ("scan.png", buf.getvalue(), "image/png")})
session = resp.json()
sid = session["session_id"]
print(f"session {sid[:8]}..., transform {session['transform']['kind']} "
      f"{session['transform']['original_shape']} -> {session['model_size']}px")

# prompts use original image coordinates; here a box around the bright block
calls_before = model.encoder_invocations
out = client.post(f"/sessions/{sid}/predict",
                  json={"prompts": {"box": [40, 30, 110, 90]}}).json()
best = out["best_index"]
mask = rle_decode(out["masks_rle"][best])
print(f"box prompt: candidate IoU estimates {[round(v, 3) for v in out['iou_pred']]}, "
      f"best mask covers {int(mask.sum())}px")

# refine with a correction click, feeding back the previous mask
out = client.post(f"/sessions/{sid}/predict",
                  json={"prompts": {"points": [{"x": 75, "y": 60, "label": "fg"}]},
                        "use_previous_mask": True}).json()
print(f"refined:    candidate IoU estimates {[round(v, 3) for v in out['iou_pred']]}")

print(f"encoder invocations during both predicts: "
      f"{model.encoder_invocations - calls_before} (embedding cached)")

client.post(f"/sessions/{sid}/reset")
client.delete(f"/sessions/{sid}")
print("session reset and deleted")
