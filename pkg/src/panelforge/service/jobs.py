"""Bounded FIFO job queue with a single model-executor lane.

One worker thread owns all model inference, so concurrent submissions
can never interleave model state and results match serial execution.
Queue overflow is reported to the caller (the HTTP layer maps it to 429).
"""

from __future__ import annotations

import logging
import queue
import threading
import time
import uuid

from panelforge.models.generator import PanelGeneratorModel
from panelforge.service.store import ServiceStore
from panelforge.specs import PanelSpec

logger = logging.getLogger(__name__)


class QueueFullError(RuntimeError):
    pass


class GenerationExecutor:
    def __init__(self, model: PanelGeneratorModel, store: ServiceStore, depth: int = 8):
        self.model = model
        self.store = store
        self._queue: "queue.Queue[tuple[str, PanelSpec] | None]" = queue.Queue(maxsize=depth)
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        if self._thread is not None:
            return
        self._thread = threading.Thread(target=self._run, name="panelforge-executor", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        if self._thread is None:
            return
        self._queue.put(None)
        self._thread.join(timeout=30)
        self._thread = None

    def submit(self, spec: PanelSpec, spec_json: str) -> str:
        job_id = uuid.uuid4().hex[:16]
        self.store.create_job(job_id, spec_json)
        try:
            self._queue.put_nowait((job_id, spec))
        except queue.Full:
            self.store.update_job(job_id, state="failed", error="queue full", finished_at=time.time())
            raise QueueFullError(f"job queue is full (depth {self._queue.maxsize})") from None
        return job_id

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item is None:
                return
            job_id, spec = item
            self.store.update_job(job_id, state="running", started_at=time.time())
            try:
                image = self.model.generate(spec)
                result_file = self.store.save_result(job_id, image)
                self.store.update_job(
                    job_id, state="done", result_file=result_file, finished_at=time.time()
                )
            except Exception as exc:
                logger.exception("generation job %s failed", job_id)
                self.store.update_job(
                    job_id, state="failed", error=str(exc), finished_at=time.time()
                )
