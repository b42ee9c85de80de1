"""Session-based inference service: upload an image once, cache its embedding,
then serve iterative prompt -> mask predictions over HTTP+JSON."""

from __future__ import annotations

import io
import threading
import time
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import torch
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from PIL import Image

from . import prompts as ps
from .data_engine import ResizeTransform, Slice2D, resize_sample
from .model import SegModel, remove_adapters

MAX_PAYLOAD_BYTES = 16 * 1024 * 1024


def rle_encode(mask: np.ndarray) -> dict:
    """Row-major run-length encoding, COCO style: counts alternate starting with zeros."""
    flat = np.asarray(mask, dtype=bool).reshape(-1)
    runs = list(_runs(flat))
    counts = []
    if runs and runs[0][0]:  # starts with foreground: leading zero-run of length 0
        counts.append(0)
    counts.extend(int(length) for _, length in runs)
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def _runs(flat: np.ndarray):
    if flat.size == 0:
        return
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [flat.size]])
    for s, e in zip(starts, ends):
        yield bool(flat[s]), e - s


def rle_decode(rle: dict) -> np.ndarray:
    h, w = rle["size"]
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for count in rle["counts"]:
        if value:
            flat[pos:pos + count] = True
        pos += count
        value = not value
    if pos != h * w:
        raise ValueError(f"RLE covers {pos} pixels, mask has {h * w}")
    return flat.reshape(h, w)


@dataclass
class Session:
    session_id: str
    image: np.ndarray  # model-resolution uint8
    embedding: torch.Tensor
    transform: ResizeTransform
    adapters: str  # "keep" | "remove"
    history: list = field(default_factory=list)  # (PromptSet json, response summary)
    created_at: float = field(default_factory=time.time)
    last_low_res: np.ndarray | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    """In-memory sessions with a max cap (LRU eviction) and TTL expiry."""

    def __init__(self, max_sessions: int = 64, ttl_seconds: float = 3600.0):
        self.max_sessions = max_sessions
        self.ttl = ttl_seconds
        self._sessions: OrderedDict[str, Session] = OrderedDict()
        self._lock = threading.Lock()

    def add(self, session: Session) -> None:
        with self._lock:
            self._expire()
            while len(self._sessions) >= self.max_sessions:
                self._sessions.popitem(last=False)
            self._sessions[session.session_id] = session

    def get(self, session_id: str) -> Session:
        with self._lock:
            self._expire()
            if session_id not in self._sessions:
                raise KeyError(session_id)
            self._sessions.move_to_end(session_id)
            return self._sessions[session_id]

    def delete(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._sessions:
                raise KeyError(session_id)
            del self._sessions[session_id]

    def _expire(self) -> None:
        now = time.time()
        stale = [k for k, s in self._sessions.items() if now - s.created_at > self.ttl]
        for k in stale:
            del self._sessions[k]


def create_app(model: SegModel, max_sessions: int = 64, ttl_seconds: float = 3600.0) -> FastAPI:
    app = FastAPI(title="medseg2d inference service")
    store = SessionStore(max_sessions, ttl_seconds)
    models = {"keep": model}
    model_lock = threading.Lock()

    def model_for(adapters: str) -> SegModel:
        with model_lock:
            if adapters not in models:
                models[adapters] = remove_adapters(models["keep"])
            return models[adapters]

    app.state.store = store
    app.state.models = models

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(store._sessions),
                "input_size": model.input_size}

    @app.post("/sessions")
    async def create_session(image: UploadFile = File(...), adapters: str = Form("keep")):
        if adapters not in ("keep", "remove"):
            raise HTTPException(422, f"adapters must be keep|remove, got {adapters!r}")
        payload = await image.read()
        if len(payload) > MAX_PAYLOAD_BYTES:
            raise HTTPException(413, "image payload too large")
        try:
            pixels = np.array(Image.open(io.BytesIO(payload)).convert("L"))
        except Exception as exc:
            raise HTTPException(400, f"image does not decode: {exc}")
        m = model_for(adapters)
        sl = Slice2D(pixels, "native2D", 0, "upload")
        resized, _, transform = resize_sample(sl, [], m.input_size)
        m.eval()
        with torch.no_grad():
            emb = m.encode_image(resized.pixels)
        session = Session(uuid.uuid4().hex, resized.pixels, emb, transform, adapters)
        store.add(session)
        return {"session_id": session.session_id,
                "model_size": m.input_size,
                "transform": transform.to_json()}

    @app.post("/sessions/{session_id}/predict")
    def predict(session_id: str, body: dict):
        try:
            session = store.get(session_id)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id}")
        m = model_for(session.adapters)
        prompts_json = body.get("prompts", {})
        use_previous_mask = bool(body.get("use_previous_mask", False))
        try:
            pset = ps.PromptSet.from_json(prompts_json, dense_shape=m.dense_shape)
        except (ValueError, KeyError, TypeError) as exc:
            raise HTTPException(422, f"bad prompt set: {exc}")
        if not pset.points and pset.box is None and pset.dense is None:
            raise HTTPException(422, "empty prompt set")

        with session.lock:
            t = session.transform
            oh, ow = t.original_shape
            mapped_points = []
            for p in pset.points:
                if not (0 <= p.x < ow and 0 <= p.y < oh):
                    raise HTTPException(422, f"point ({p.x}, {p.y}) outside original image {ow}x{oh}")
                mx, my = t.to_model(p.x, p.y)
                mapped_points.append(ps.PointPrompt(int(round(mx)), int(round(my)), p.label))
            mapped_box = None
            if pset.box is not None:
                x0, y0 = t.to_model(pset.box.x0, pset.box.y0)
                x1, y1 = t.to_model(pset.box.x1, pset.box.y1)
                s = m.input_size
                mapped_box = ps.BoxPrompt(
                    int(np.clip(round(x0), 0, s - 1)), int(np.clip(round(y0), 0, s - 1)),
                    int(np.clip(round(x1), 1, s)), int(np.clip(round(y1), 1, s)))
            dense = pset.dense
            if use_previous_mask and dense is None and session.last_low_res is not None:
                dense = ps.DensePrompt(session.last_low_res)
            model_pset = ps.PromptSet(mapped_points, mapped_box, dense)

            m.eval()
            with torch.no_grad():
                out = m.decode(session.embedding, model_pset)
            best = out.best_index()
            binary = out.binary_masks()
            session.last_low_res = out.low_res_logits[best].numpy().astype(np.float64)
            response = {
                "masks_rle": [rle_encode(binary[i]) for i in range(binary.shape[0])],
                "iou_pred": [float(v) for v in out.iou_pred],
                "best_index": best,
                "transform": t.to_json(),
            }
            if body.get("return_logits"):
                response["low_res_logits"] = ps.encode_dense_grid(session.last_low_res)
            session.history.append({"prompts": prompts_json,
                                    "use_previous_mask": use_previous_mask,
                                    "best_index": best})
        return response

    @app.post("/sessions/{session_id}/reset")
    def reset(session_id: str):
        try:
            session = store.get(session_id)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id}")
        with session.lock:
            session.history.clear()
            session.last_low_res = None
        return {"status": "ok"}

    @app.delete("/sessions/{session_id}")
    def delete(session_id: str):
        try:
            store.delete(session_id)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id}")
        return {"status": "ok"}

    return app
