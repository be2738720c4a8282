"""Embedded persistence for the generation service.

Character records and job metadata live in one sqlite file; images go on
disk under content hashes. Character ingestion is idempotent: the id is
a digest of (name, image bytes), so re-posting the same payload returns
the same record. All sqlite access is serialized behind one lock; reads
of image files need no coordination.
"""

from __future__ import annotations

import hashlib
import io
import sqlite3
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

_SCHEMA = """
CREATE TABLE IF NOT EXISTS characters (
    id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    image_file TEXT NOT NULL,
    width INTEGER NOT NULL,
    height INTEGER NOT NULL,
    created_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS jobs (
    id TEXT PRIMARY KEY,
    state TEXT NOT NULL,
    spec_json TEXT NOT NULL,
    result_file TEXT,
    error TEXT,
    queued_at REAL,
    started_at REAL,
    finished_at REAL
);
"""


class UnsupportedImageError(ValueError):
    pass


@dataclass
class CharacterRecord:
    id: str
    name: str
    image_file: str
    width: int
    height: int
    created_at: float

    def to_doc(self, image_url_prefix: str = "/images/") -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "image_url": f"{image_url_prefix}{self.image_file}",
            "width": self.width,
            "height": self.height,
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(self.created_at)),
        }


@dataclass
class JobRecord:
    id: str
    state: str  # queued | running | done | failed
    spec_json: str
    result_file: str | None = None
    error: str | None = None
    queued_at: float | None = None
    started_at: float | None = None
    finished_at: float | None = None


class ServiceStore:
    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.images_dir = self.data_dir / "images"
        self.results_dir = self.data_dir / "results"
        self.images_dir.mkdir(parents=True, exist_ok=True)
        self.results_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(self.data_dir / "store.db", check_same_thread=False)
        with self._lock:
            self._conn.executescript(_SCHEMA)
            self._conn.commit()

    # -- characters ---------------------------------------------------------

    def add_character(self, name: str, image_bytes: bytes) -> tuple[CharacterRecord, bool]:
        """Returns (record, created). Idempotent on (name, payload)."""
        try:
            image = Image.open(io.BytesIO(image_bytes))
            image.load()
        except Exception as exc:
            raise UnsupportedImageError(f"payload is not a decodable image: {exc}") from exc
        if image.format not in ("PNG", "JPEG"):
            raise UnsupportedImageError(f"unsupported image format {image.format}; need PNG or JPEG")
        char_id = hashlib.sha256(name.encode("utf-8") + b"\x00" + image_bytes).hexdigest()[:16]
        with self._lock:
            row = self._conn.execute("SELECT * FROM characters WHERE id = ?", (char_id,)).fetchone()
            if row is not None:
                return self._char_from_row(row), False
            # stored square-padded on white so downstream crops are uniform
            side = max(image.size)
            canvas = Image.new("L", (side, side), color=255)
            canvas.paste(image.convert("L"), ((side - image.width) // 2, (side - image.height) // 2))
            image_file = f"{char_id}.png"
            canvas.save(self.images_dir / image_file)
            record = CharacterRecord(
                id=char_id,
                name=name,
                image_file=image_file,
                width=canvas.width,
                height=canvas.height,
                created_at=time.time(),
            )
            self._conn.execute(
                "INSERT INTO characters VALUES (?, ?, ?, ?, ?, ?)",
                (record.id, record.name, record.image_file, record.width, record.height, record.created_at),
            )
            self._conn.commit()
            return record, True

    @staticmethod
    def _char_from_row(row) -> CharacterRecord:
        return CharacterRecord(*row)

    def get_character(self, char_id: str) -> CharacterRecord | None:
        with self._lock:
            row = self._conn.execute("SELECT * FROM characters WHERE id = ?", (char_id,)).fetchone()
        return self._char_from_row(row) if row else None

    def list_characters(self) -> list[CharacterRecord]:
        with self._lock:
            rows = self._conn.execute("SELECT * FROM characters ORDER BY created_at, id").fetchall()
        return [self._char_from_row(r) for r in rows]

    def delete_character(self, char_id: str) -> bool:
        with self._lock:
            record = self._conn.execute(
                "SELECT image_file FROM characters WHERE id = ?", (char_id,)
            ).fetchone()
            if record is None:
                return False
            self._conn.execute("DELETE FROM characters WHERE id = ?", (char_id,))
            self._conn.commit()
        (self.images_dir / record[0]).unlink(missing_ok=True)
        return True

    def load_character_image(self, char_id: str) -> Image.Image:
        record = self.get_character(char_id)
        if record is None:
            raise KeyError(char_id)
        return Image.open(self.images_dir / record.image_file).convert("L")

    # -- jobs ----------------------------------------------------------------

    def create_job(self, job_id: str, spec_json: str) -> JobRecord:
        record = JobRecord(id=job_id, state="queued", spec_json=spec_json, queued_at=time.time())
        with self._lock:
            self._conn.execute(
                "INSERT INTO jobs VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                (record.id, record.state, record.spec_json, None, None, record.queued_at, None, None),
            )
            self._conn.commit()
        return record

    def get_job(self, job_id: str) -> JobRecord | None:
        with self._lock:
            row = self._conn.execute("SELECT * FROM jobs WHERE id = ?", (job_id,)).fetchone()
        return JobRecord(*row) if row else None

    def update_job(self, job_id: str, **updates) -> None:
        """Transitions out of terminal states are refused."""
        allowed = {"state", "result_file", "error", "started_at", "finished_at"}
        bad = set(updates) - allowed
        if bad:
            raise ValueError(f"cannot update job fields {sorted(bad)}")
        with self._lock:
            row = self._conn.execute("SELECT state FROM jobs WHERE id = ?", (job_id,)).fetchone()
            if row is None:
                raise KeyError(job_id)
            if row[0] in ("done", "failed"):
                raise RuntimeError(f"job {job_id} is terminal ({row[0]}); refusing update")
            sets = ", ".join(f"{k} = ?" for k in updates)
            self._conn.execute(f"UPDATE jobs SET {sets} WHERE id = ?", (*updates.values(), job_id))
            self._conn.commit()

    def save_result(self, job_id: str, image: Image.Image) -> str:
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        data = buf.getvalue()
        name = f"{hashlib.sha256(data).hexdigest()[:16]}.png"
        path = self.results_dir / name
        if not path.exists():
            path.write_bytes(data)
        return name

    def close(self) -> None:
        with self._lock:
            self._conn.close()
