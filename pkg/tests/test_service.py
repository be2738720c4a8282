import base64
import io
import time

import jsonschema
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from panelforge.models.generator import build_model
from panelforge.service.app import ServiceSettings, create_app
from panelforge.service.store import ServiceStore
from panelforge.specs import load_schema
from conftest import tiny_pipeline_config


def png_bytes(size=(24, 24), value=90) -> bytes:
    buf = io.BytesIO()
    Image.new("L", size, value).save(buf, format="PNG")
    return buf.getvalue()


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


@pytest.fixture(scope="module")
def client(tmp_path_factory):
    model = build_model(tiny_pipeline_config())
    settings = ServiceSettings(
        data_dir=str(tmp_path_factory.mktemp("service")),
        queue_depth=4,
        max_upload_bytes=256 * 1024,
    )
    app = create_app(settings, model=model)
    with TestClient(app) as c:
        yield c


def wait_for(client, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        doc = client.get(f"/jobs/{job_id}").json()
        if doc["state"] in ("done", "failed"):
            return doc
        time.sleep(0.02)
    raise TimeoutError(job_id)


BASE_SPEC = {"caption": "a calm station", "size": [64, 64], "seed": 3, "steps": 3}


class TestCharacters:
    def test_create_and_echo(self, client):
        resp = client.post("/characters", json={"name": "Hero", "image_base64": b64(png_bytes())})
        assert resp.status_code == 201
        doc = resp.json()
        assert doc["name"] == "Hero" and doc["id"]
        jsonschema.validate(doc, load_schema("character_record"))

    def test_idempotent_same_payload(self, client):
        payload = {"name": "Twin", "image_base64": b64(png_bytes(value=33))}
        a = client.post("/characters", json=payload)
        b = client.post("/characters", json=payload)
        assert a.json()["id"] == b.json()["id"]
        assert a.status_code == 201 and b.status_code == 200

    def test_text_payload_415(self, client):
        resp = client.post("/characters", json={"name": "x", "image_base64": b64(b"just text")})
        assert resp.status_code == 415

    def test_bad_base64_415(self, client):
        resp = client.post("/characters", json={"name": "x", "image_base64": "!!!not-base64!!!"})
        assert resp.status_code == 415

    def test_oversize_413(self, client):
        import numpy as np

        noise = np.random.default_rng(0).integers(0, 256, (600, 600), dtype=np.uint8)
        buf = io.BytesIO()
        Image.fromarray(noise, "L").save(buf, format="PNG")
        big = buf.getvalue()
        assert len(big) > 256 * 1024
        resp = client.post("/characters", json={"name": "big", "image_base64": b64(big)})
        assert resp.status_code == 413

    def test_get_list_delete(self, client):
        created = client.post(
            "/characters", json={"name": "Ephemeral", "image_base64": b64(png_bytes(value=77))}
        ).json()
        assert client.get(f"/characters/{created['id']}").status_code == 200
        assert any(c["id"] == created["id"] for c in client.get("/characters").json())
        img = client.get(created["image_url"])
        assert img.status_code == 200 and img.headers["content-type"] == "image/png"
        assert client.delete(f"/characters/{created['id']}").status_code == 204
        assert client.get(f"/characters/{created['id']}").status_code == 404
        assert client.delete(f"/characters/{created['id']}").status_code == 404


class TestGenerate:
    def test_degenerate_spec_done_with_png(self, client):
        job = client.post("/generate", json=BASE_SPEC)
        assert job.status_code == 202
        doc = wait_for(client, job.json()["id"])
        assert doc["state"] == "done"
        jsonschema.validate(doc, load_schema("generation_job"))
        png = client.get(doc["result_url"]).content
        img = Image.open(io.BytesIO(png))
        assert img.size == (64, 64)

    def test_same_seed_byte_identical(self, client):
        """Both jobs enter the queue before either runs: the single
        executor lane must serialize them to identical results."""
        ref = client.post("/characters", json={"name": "Det", "image_base64": b64(png_bytes(value=50))}).json()
        spec = dict(BASE_SPEC, seed=77, characters=[{"ref": ref["id"], "bbox": [0, 16, 32, 64]}],
                    dialogs=[{"bbox": [34, 2, 62, 16]}])
        ids = [client.post("/generate", json=spec).json()["id"] for _ in range(2)]
        results = [client.get(wait_for(client, job_id)["result_url"]).content for job_id in ids]
        assert results[0] == results[1]

    def test_inline_base64(self, client):
        doc = wait_for(client, client.post("/generate", json=BASE_SPEC).json()["id"])
        inline = client.get(f"/jobs/{doc['id']}", params={"inline": 1}).json()
        assert inline["result_base64"]
        assert base64.b64decode(inline["result_base64"]) == client.get(doc["result_url"]).content

    def test_box_out_of_bounds_422_with_field_path(self, client):
        ref = client.post("/characters", json={"name": "OOB", "image_base64": b64(png_bytes(value=61))}).json()
        spec = dict(BASE_SPEC, characters=[{"ref": ref["id"], "bbox": [200, 0, 300, 100]}])
        resp = client.post("/generate", json=spec)
        assert resp.status_code == 422
        assert resp.json()["detail"]["field"] == "characters[0].bbox"

    def test_unknown_character_404(self, client):
        spec = dict(BASE_SPEC, characters=[{"ref": "does-not-exist", "bbox": [0, 0, 16, 16]}])
        resp = client.post("/generate", json=spec)
        assert resp.status_code == 404

    def test_schema_violation_422(self, client):
        resp = client.post("/generate", json={"size": [64, 64]})  # caption missing
        assert resp.status_code == 422
        assert "caption" in resp.json()["detail"]["message"]

    def test_invalid_size_422(self, client):
        resp = client.post("/generate", json={"caption": "x", "size": [48, 48]})
        assert resp.status_code == 422
        assert resp.json()["detail"]["field"] == "size"

    def test_too_many_characters_422(self, client):
        ref = client.post("/characters", json={"name": "Crowd", "image_base64": b64(png_bytes(value=42))}).json()
        chars = [{"ref": ref["id"], "bbox": [0, 0, 8, 8]}] * 5
        resp = client.post("/generate", json=dict(BASE_SPEC, characters=chars))
        assert resp.status_code == 422

    def test_unknown_job_404(self, client):
        assert client.get("/jobs/nope").status_code == 404


class TestConfigAndHealth:
    def test_healthz(self, client):
        assert client.get("/healthz").json() == {"status": "ok"}

    def test_config_records_beta_default(self, client):
        doc = client.get("/config").json()
        assert doc["beta"] == pytest.approx(0.4)
        assert doc["alpha"] == pytest.approx(0.6)
        assert doc["max_characters"] == 4

    def test_schemas_served(self, client):
        doc = client.get("/schemas/panel_spec").json()
        assert doc["title"] == "PanelSpec"


class TestQueueLimits:
    def test_queue_full_429(self, tmp_path):
        model = build_model(tiny_pipeline_config())
        app = create_app(ServiceSettings(data_dir=str(tmp_path), queue_depth=1), model=model)
        # no lifespan: executor not started, so jobs stay queued
        from fastapi.testclient import TestClient as TC

        client = TC(app)
        slow = dict(BASE_SPEC, steps=50)
        codes = [client.post("/generate", json=dict(slow, seed=i)).status_code for i in range(4)]
        assert 429 in codes
        assert codes[0] == 202


class TestJobStateMachine:
    def test_terminal_states_immutable(self, tmp_path):
        store = ServiceStore(tmp_path)
        store.create_job("j1", "{}")
        store.update_job("j1", state="running", started_at=1.0)
        store.update_job("j1", state="done", finished_at=2.0)
        with pytest.raises(RuntimeError):
            store.update_job("j1", state="running")
        store.close()
