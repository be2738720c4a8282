"""HTTP generation service: character library plus panel generation jobs.

JSON everywhere; images travel as base64 on ingest and by reference URL
(or inline base64 on request) on the way out. Responses conform to the
schema files shipped under panelforge/schemas/.
"""

from __future__ import annotations

import base64
import binascii
import json
import logging
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from panelforge.models.generator import PanelGeneratorModel, PipelineConfig, build_model
from panelforge.service.jobs import GenerationExecutor, QueueFullError
from panelforge.service.store import JobRecord, ServiceStore, UnsupportedImageError
from panelforge.specs import (
    GenerationDefaults,
    SpecValidationError,
    UnknownReferenceError,
    load_schema,
    parse_panel_spec,
)

logger = logging.getLogger(__name__)


@dataclass
class ServiceSettings:
    data_dir: str
    checkpoint_path: str | None = None
    queue_depth: int = 8
    max_upload_bytes: int = 4 * 1024 * 1024
    defaults: GenerationDefaults | None = None


class CharacterUpload(BaseModel):
    name: str
    image_base64: str


def _load_model(settings: ServiceSettings) -> PanelGeneratorModel:
    if settings.checkpoint_path:
        from panelforge.training.checkpoint import CheckpointArchive
        from panelforge.training.config import train_config_from_flat

        archive = CheckpointArchive.load(settings.checkpoint_path)
        cfg = train_config_from_flat(archive.config).effective_model()
        model = build_model(cfg)
        archive.apply_to_model(model)
    else:
        logger.warning("no checkpoint configured; serving a freshly initialized model")
        model = build_model(PipelineConfig())
    model.eval()
    return model


def _job_doc(record: JobRecord, inline: bool, store: ServiceStore) -> dict:
    doc = {
        "id": record.id,
        "state": record.state,
        "spec": json.loads(record.spec_json),
        "result_url": f"/results/{record.result_file}" if record.result_file else None,
        "result_base64": None,
        "error": record.error,
        "timings": {
            "queued_at": record.queued_at,
            "started_at": record.started_at,
            "finished_at": record.finished_at,
        },
    }
    if inline and record.result_file:
        data = (store.results_dir / record.result_file).read_bytes()
        doc["result_base64"] = base64.b64encode(data).decode("ascii")
    return doc


def create_app(settings: ServiceSettings, model: PanelGeneratorModel | None = None) -> FastAPI:
    store = ServiceStore(settings.data_dir)
    model = model if model is not None else _load_model(settings)
    defaults = settings.defaults or GenerationDefaults(
        alpha=model.config.alpha_infer, beta=model.config.beta, steps=model.config.steps
    )
    executor = GenerationExecutor(model, store, depth=settings.queue_depth)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        executor.start()
        yield
        executor.stop()
        store.close()

    app = FastAPI(title="panelforge", lifespan=lifespan)
    app.state.store = store
    app.state.model = model
    app.state.executor = executor

    # the studio frontend is served from its own origin
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(SpecValidationError)
    async def _spec_error(_, exc: SpecValidationError):
        return JSONResponse(
            status_code=422,
            content={"detail": {"field": exc.field_path, "message": str(exc)}},
        )

    @app.exception_handler(UnknownReferenceError)
    async def _unknown_ref(_, exc: UnknownReferenceError):
        return JSONResponse(
            status_code=404,
            content={"detail": {"field": exc.field_path, "message": f"unknown character {exc.ref!r}"}},
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/config")
    def config():
        return {
            "alpha": defaults.alpha,
            "beta": defaults.beta,
            "steps": defaults.steps,
            "max_characters": model.config.n_c_cap,
            "buckets": [list(b) for b in model.config.buckets],
            "queue_depth": settings.queue_depth,
            "checkpoint": settings.checkpoint_path,
            "config_hash": model.config.config_hash(),
        }

    @app.get("/schemas/{name}")
    def schema(name: str):
        try:
            return load_schema(name)
        except FileNotFoundError:
            return JSONResponse(status_code=404, content={"detail": f"no schema named {name!r}"})

    # -- character library ---------------------------------------------------

    @app.post("/characters")
    def post_character(upload: CharacterUpload):
        try:
            payload = base64.b64decode(upload.image_base64, validate=True)
        except (binascii.Error, ValueError):
            return JSONResponse(status_code=415, content={"detail": "image_base64 is not valid base64"})
        if len(payload) > settings.max_upload_bytes:
            return JSONResponse(
                status_code=413,
                content={"detail": f"payload exceeds {settings.max_upload_bytes} bytes"},
            )
        try:
            record, created = store.add_character(upload.name, payload)
        except UnsupportedImageError as exc:
            return JSONResponse(status_code=415, content={"detail": str(exc)})
        return JSONResponse(status_code=201 if created else 200, content=record.to_doc())

    @app.get("/characters")
    def list_characters():
        return [r.to_doc() for r in store.list_characters()]

    @app.get("/characters/{char_id}")
    def get_character(char_id: str):
        record = store.get_character(char_id)
        if record is None:
            return JSONResponse(status_code=404, content={"detail": f"unknown character {char_id!r}"})
        return record.to_doc()

    @app.delete("/characters/{char_id}", status_code=204)
    def delete_character(char_id: str):
        if not store.delete_character(char_id):
            return JSONResponse(status_code=404, content={"detail": f"unknown character {char_id!r}"})

    @app.get("/images/{filename}")
    def get_image(filename: str):
        path = store.images_dir / Path(filename).name
        if not path.exists():
            return JSONResponse(status_code=404, content={"detail": "no such image"})
        return FileResponse(path, media_type="image/png")

    # -- generation ----------------------------------------------------------

    @app.post("/generate", status_code=202)
    async def generate(request: Request):
        doc = await request.json()
        spec = parse_panel_spec(
            doc,
            resolver=store.load_character_image,
            defaults=defaults,
            max_characters=model.config.n_c_cap,
            valid_sizes=[tuple(b) for b in model.config.buckets],
        )
        try:
            job_id = executor.submit(spec, json.dumps(doc, sort_keys=True))
        except QueueFullError as exc:
            return JSONResponse(status_code=429, content={"detail": str(exc)})
        return _job_doc(store.get_job(job_id), inline=False, store=store)

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str, inline: int = Query(default=0)):
        record = store.get_job(job_id)
        if record is None:
            return JSONResponse(status_code=404, content={"detail": f"unknown job {job_id!r}"})
        return _job_doc(record, inline=bool(inline), store=store)

    @app.get("/results/{filename}")
    def get_result(filename: str):
        path = store.results_dir / Path(filename).name
        if not path.exists():
            return JSONResponse(status_code=404, content={"detail": "no such result"})
        return FileResponse(path, media_type="image/png")

    return app
