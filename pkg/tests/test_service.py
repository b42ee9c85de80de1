import io
import threading

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from PIL import Image

from medseg2d.model import ModelConfig, SegModel
from medseg2d.model.encoder import EncoderConfig
from medseg2d.service import create_app, rle_decode, rle_encode

TOY = ModelConfig(EncoderConfig(input_size=64, patch_size=16, embed_dim=32,
                                depth=2, num_heads=4))


def png_bytes(pixels: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return buf.getvalue()


def toy_image(seed=0, size=64):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (size, size), dtype=np.uint8)
    img[10:40, 10:40] = 240
    return img


@pytest.fixture(scope="module")
def model():
    torch.manual_seed(0)
    return SegModel(TOY)


@pytest.fixture()
def client(model):
    return TestClient(create_app(model))


def open_session(client, seed=0, size=64, adapters="keep"):
    r = client.post("/sessions",
                    files={"image": ("img.png", png_bytes(toy_image(seed, size)), "image/png")},
                    data={"adapters": adapters})
    assert r.status_code == 200, r.text
    return r.json()


POINT_BODY = {"prompts": {"points": [{"x": 20, "y": 20, "label": "fg"}]}}
BOX_BODY = {"prompts": {"box": [10, 10, 40, 40]}}


class TestRle:
    def test_known_pattern(self):
        mask = np.array([[0, 1, 1], [1, 0, 0]], dtype=bool)
        assert rle_encode(mask) == {"size": [2, 3], "counts": [1, 3, 2]}

    def test_leading_foreground(self):
        mask = np.array([[1, 0]], dtype=bool)
        assert rle_encode(mask)["counts"] == [0, 1, 1]

    def test_all_background(self):
        mask = np.zeros((3, 3), dtype=bool)
        assert rle_encode(mask)["counts"] == [9]

    def test_bad_total_rejected(self):
        with pytest.raises(ValueError):
            rle_decode({"size": [2, 2], "counts": [1, 1]})

    @given(hnp.arrays(np.bool_, st.tuples(st.integers(1, 12), st.integers(1, 12))))
    @settings(max_examples=80, deadline=None)
    def test_roundtrip(self, mask):
        assert np.array_equal(rle_decode(rle_encode(mask)), mask)


class TestSessionLifecycle:
    def test_healthz(self, client):
        r = client.get("/healthz")
        assert r.status_code == 200
        assert r.json()["input_size"] == 64

    def test_create_and_predict(self, client):
        info = open_session(client)
        r = client.post(f"/sessions/{info['session_id']}/predict", json=POINT_BODY)
        assert r.status_code == 200
        body = r.json()
        assert len(body["masks_rle"]) == 3
        assert len(body["iou_pred"]) == 3
        assert body["best_index"] in (0, 1, 2)
        mask = rle_decode(body["masks_rle"][body["best_index"]])
        assert mask.shape == (64, 64)

    def test_delete_then_404(self, client):
        info = open_session(client)
        sid = info["session_id"]
        assert client.delete(f"/sessions/{sid}").status_code == 200
        assert client.post(f"/sessions/{sid}/predict", json=POINT_BODY).status_code == 404
        assert client.delete(f"/sessions/{sid}").status_code == 404

    def test_reset_clears_refinement_state(self, client, model):
        info = open_session(client)
        sid = info["session_id"]
        first = client.post(f"/sessions/{sid}/predict", json=POINT_BODY).json()
        client.post(f"/sessions/{sid}/predict",
                    json={**POINT_BODY, "use_previous_mask": True})
        assert client.post(f"/sessions/{sid}/reset").status_code == 200
        # with no stored mask left, use_previous_mask is a no-op
        again = client.post(f"/sessions/{sid}/predict",
                            json={**POINT_BODY, "use_previous_mask": True}).json()
        assert again["masks_rle"] == first["masks_rle"]

    def test_embedding_computed_once(self, client, model):
        info = open_session(client)
        sid = info["session_id"]
        before = model.encoder_invocations
        for _ in range(12):
            assert client.post(f"/sessions/{sid}/predict", json=POINT_BODY).status_code == 200
        assert model.encoder_invocations == before

    def test_replay_byte_identical(self, client):
        info = open_session(client)
        sid = info["session_id"]
        payloads = [client.post(f"/sessions/{sid}/predict", json=BOX_BODY).content
                    for _ in range(5)]
        assert all(p == payloads[0] for p in payloads)


class TestPromptHandling:
    def test_original_resolution_coordinates(self, client):
        # a 128x128 upload is scaled to 64; prompts arrive in original pixels
        info = open_session(client, size=128)
        sid = info["session_id"]
        assert info["transform"]["original_shape"] == [128, 128]
        r = client.post(f"/sessions/{sid}/predict",
                        json={"prompts": {"points": [{"x": 100, "y": 100, "label": "fg"}],
                                          "box": [20, 20, 110, 110]}})
        assert r.status_code == 200

    def test_out_of_bounds_point(self, client):
        sid = open_session(client)["session_id"]
        r = client.post(f"/sessions/{sid}/predict",
                        json={"prompts": {"points": [{"x": 64, "y": 5, "label": "fg"}]}})
        assert r.status_code == 422

    def test_empty_prompt_set(self, client):
        sid = open_session(client)["session_id"]
        assert client.post(f"/sessions/{sid}/predict",
                           json={"prompts": {}}).status_code == 422

    def test_malformed_prompts(self, client):
        sid = open_session(client)["session_id"]
        r = client.post(f"/sessions/{sid}/predict",
                        json={"prompts": {"points": [{"x": 1, "y": 1, "label": "maybe"}]}})
        assert r.status_code == 422
        r = client.post(f"/sessions/{sid}/predict",
                        json={"prompts": {"box": [10, 10, 10, 40]}})
        assert r.status_code == 422

    def test_return_logits_flag(self, client, model):
        sid = open_session(client)["session_id"]
        r = client.post(f"/sessions/{sid}/predict",
                        json={**POINT_BODY, "return_logits": True})
        body = r.json()
        assert "low_res_logits" in body
        from medseg2d.prompts import decode_dense_grid
        grid = decode_dense_grid(body["low_res_logits"], model.dense_shape)
        assert grid.shape == model.dense_shape

    def test_previous_mask_changes_output(self, client):
        sid = open_session(client)["session_id"]
        plain = client.post(f"/sessions/{sid}/predict", json=POINT_BODY).json()
        refined = client.post(f"/sessions/{sid}/predict",
                              json={**POINT_BODY, "use_previous_mask": True}).json()
        assert refined["iou_pred"] != plain["iou_pred"]


class TestUploadValidation:
    def test_invalid_image(self, client):
        r = client.post("/sessions",
                        files={"image": ("junk.png", b"not a png", "image/png")})
        assert r.status_code == 400

    def test_oversized_payload(self, client, monkeypatch):
        import medseg2d.service as svc
        monkeypatch.setattr(svc, "MAX_PAYLOAD_BYTES", 64)
        r = client.post("/sessions",
                        files={"image": ("img.png", png_bytes(toy_image()), "image/png")})
        assert r.status_code == 413

    def test_bad_adapters_value(self, client):
        r = client.post("/sessions",
                        files={"image": ("img.png", png_bytes(toy_image()), "image/png")},
                        data={"adapters": "half"})
        assert r.status_code == 422


class TestAdapterModes:
    def test_remove_mode_session(self, model):
        client = TestClient(create_app(model))
        keep = open_session(client, adapters="keep")
        remove = open_session(client, adapters="remove")
        a = client.post(f"/sessions/{keep['session_id']}/predict", json=BOX_BODY).json()
        b = client.post(f"/sessions/{remove['session_id']}/predict", json=BOX_BODY).json()
        # zero-initialized adapters are an exact identity, so outputs agree
        assert a["masks_rle"] == b["masks_rle"]


class TestStoreLimits:
    def test_lru_eviction(self, model):
        client = TestClient(create_app(model, max_sessions=2))
        sids = [open_session(client, seed=i)["session_id"] for i in range(3)]
        assert client.post(f"/sessions/{sids[0]}/predict", json=POINT_BODY).status_code == 404
        assert client.post(f"/sessions/{sids[2]}/predict", json=POINT_BODY).status_code == 200

    def test_ttl_expiry(self, model):
        client = TestClient(create_app(model, ttl_seconds=0.0))
        sid = open_session(client)["session_id"]
        assert client.post(f"/sessions/{sid}/predict", json=POINT_BODY).status_code == 404


class TestConcurrentSessions:
    def test_isolation_under_threads(self, model):
        client = TestClient(create_app(model))
        n = 8
        sessions = [open_session(client, seed=i) for i in range(n)]
        reference = [client.post(f"/sessions/{s['session_id']}/predict", json=BOX_BODY).json()
                     for s in sessions]
        results = [[] for _ in range(n)]

        def worker(i):
            sid = sessions[i]["session_id"]
            for _ in range(4):
                results[i].append(client.post(f"/sessions/{sid}/predict", json=BOX_BODY).json())

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(n)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for i in range(n):
            for got in results[i]:
                assert got["masks_rle"] == reference[i]["masks_rle"]
