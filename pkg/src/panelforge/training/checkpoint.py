"""Versioned single-file checkpoint archive.

Layout: an 8-byte magic, an 8-byte big-endian header length, a JSON
header (sorted keys, canonical separators), then raw little-endian tensor
bytes at the offsets the header records. Sections and tensors are laid
out in sorted-name order, so saving a loaded archive reproduces the input
byte for byte. Each section carries a sha256 over its tensor names,
dtypes, shapes, and data, which is how frozen-weights contracts are
checked.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import torch

if TYPE_CHECKING:
    from panelforge.models.generator import PanelGeneratorModel

MAGIC = b"PFCKPT1\n"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _section_hash(tensors: dict[str, np.ndarray]) -> str:
    digest = hashlib.sha256()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        digest.update(name.encode("utf-8"))
        digest.update(str(arr.dtype).encode("utf-8"))
        digest.update(json.dumps(list(arr.shape)).encode("utf-8"))
        digest.update(arr.tobytes())
    return digest.hexdigest()


@dataclass
class CheckpointArchive:
    sections: dict[str, dict[str, np.ndarray]]
    step: int = 0
    config: dict = field(default_factory=dict)
    config_hash: str = ""
    section_meta: dict = field(default_factory=dict)
    rng: dict = field(default_factory=dict)  # JSON-able RNG snapshots

    def section_hash(self, name: str) -> str:
        if name not in self.sections:
            raise CheckpointError(f"no such section: {name}")
        return _section_hash(self.sections[name])

    def save(self, path: str | Path) -> None:
        order = []
        offset = 0
        tensor_headers: dict = {}
        for section in sorted(self.sections):
            tensors = self.sections[section]
            entry = {}
            for name in sorted(tensors):
                arr = np.ascontiguousarray(tensors[name])
                entry[name] = {
                    "dtype": str(arr.dtype),
                    "shape": list(arr.shape),
                    "offset": offset,
                    "nbytes": int(arr.nbytes),
                }
                order.append(arr)
                offset += arr.nbytes
            tensor_headers[section] = {
                "tensors": entry,
                "hash": _section_hash(tensors),
                "meta": self.section_meta.get(section, {}),
            }
        header = {
            "version": FORMAT_VERSION,
            "step": self.step,
            "config": self.config,
            "config_hash": self.config_hash,
            "rng": self.rng,
            "sections": tensor_headers,
        }
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(len(blob).to_bytes(8, "big"))
            fh.write(blob)
            for arr in order:
                fh.write(arr.tobytes())

    @staticmethod
    def load(path: str | Path) -> "CheckpointArchive":
        raw = Path(path).read_bytes()
        if raw[: len(MAGIC)] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint archive (bad magic)")
        hlen = int.from_bytes(raw[len(MAGIC) : len(MAGIC) + 8], "big")
        header = json.loads(raw[len(MAGIC) + 8 : len(MAGIC) + 8 + hlen])
        if header.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported archive version {header.get('version')}")
        base = len(MAGIC) + 8 + hlen
        sections: dict[str, dict[str, np.ndarray]] = {}
        section_meta: dict = {}
        for sname, sdoc in header["sections"].items():
            tensors = {}
            for tname, tdoc in sdoc["tensors"].items():
                start = base + tdoc["offset"]
                buf = raw[start : start + tdoc["nbytes"]]
                tensors[tname] = np.frombuffer(buf, dtype=np.dtype(tdoc["dtype"])).reshape(tdoc["shape"]).copy()
            recomputed = _section_hash(tensors)
            if recomputed != sdoc["hash"]:
                raise CheckpointError(f"{path}: section {sname!r} hash mismatch (corrupt archive)")
            sections[sname] = tensors
            section_meta[sname] = sdoc.get("meta", {})
        return CheckpointArchive(
            sections=sections,
            step=header["step"],
            config=header.get("config", {}),
            config_hash=header.get("config_hash", ""),
            section_meta=section_meta,
            rng=header.get("rng", {}),
        )

    @staticmethod
    def from_model(
        model: "PanelGeneratorModel",
        config: dict,
        step: int,
        config_hash: str = "",
        rng: dict | None = None,
    ) -> "CheckpointArchive":
        sections = {}
        for name, state in model.checkpoint_sections().items():
            sections[name] = {k: v.detach().cpu().numpy().copy() for k, v in state.items()}
        section_meta = {}
        if model.adapter is not None:
            acfg = model.adapter.config
            section_meta["adapter"] = {
                "lora_rank": acfg.lora_rank,
                "backbone_config_hash": hashlib.sha256(
                    json.dumps(
                        {
                            "inner_dim": acfg.inner_dim,
                            "n_layers": acfg.n_layers,
                            "n_heads": acfg.n_heads,
                            "vocab_size": acfg.vocab_size,
                            "max_caption_len": acfg.max_caption_len,
                        },
                        sort_keys=True,
                    ).encode("utf-8")
                ).hexdigest()[:16],
            }
        return CheckpointArchive(
            sections=sections,
            step=step,
            config=config,
            config_hash=config_hash,
            section_meta=section_meta,
            rng=rng or {},
        )

    def apply_to_model(self, model: "PanelGeneratorModel") -> None:
        torch_sections = {
            name: {k: torch.from_numpy(v.copy()) for k, v in tensors.items()}
            for name, tensors in self.sections.items()
        }
        model.load_checkpoint_sections(torch_sections)
