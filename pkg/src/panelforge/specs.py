"""Panel generation request: runtime object, wire format, and validation.

The JSON wire format is shared by the CLI, the HTTP service, and the
studio frontend; schema files ship with the package. Validation errors
carry a dotted field path ("characters[0].bbox") so clients can point at
the offending input.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import jsonschema
from PIL import Image

from panelforge.geometry import BBox


class SpecValidationError(ValueError):
    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


class UnknownReferenceError(KeyError):
    def __init__(self, field_path: str, ref: str):
        self.field_path = field_path
        self.ref = ref
        super().__init__(f"{field_path}: unknown character reference {ref!r}")


@dataclass
class GenerationDefaults:
    alpha: float = 0.6
    beta: float = 0.4
    steps: int = 50
    seed: int = 0


@dataclass
class PanelSpec:
    caption: str
    characters: list[tuple[Image.Image, BBox]] = field(default_factory=list)
    dialogs: list[BBox] = field(default_factory=list)
    size: tuple[int, int] = (128, 128)
    alpha: float = 0.6
    beta: float = 0.4
    seed: int = 0
    steps: int = 50


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = importlib.resources.files("panelforge.schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


def _json_path(error: jsonschema.ValidationError) -> str:
    parts = []
    for item in error.absolute_path:
        if isinstance(item, int):
            parts.append(f"[{item}]")
        else:
            parts.append(f".{item}" if parts else str(item))
    return "".join(parts) or "<root>"


def validate_against_schema(doc: dict, schema_name: str) -> None:
    schema = load_schema(schema_name)
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise SpecValidationError(_json_path(err), err.message)


def validate_panel_spec_doc(
    doc: dict,
    canvas_size: tuple[int, int] | None = None,
    max_characters: int | None = None,
    valid_sizes: list[tuple[int, int]] | None = None,
) -> None:
    """Structural (schema) then semantic validation with field paths."""
    validate_against_schema(doc, "panel_spec")
    size = tuple(doc["size"])
    if valid_sizes is not None and size not in [tuple(s) for s in valid_sizes]:
        raise SpecValidationError("size", f"{list(size)} is not a configured bucket size")
    canvas = canvas_size or size
    chars = doc.get("characters", [])
    if max_characters is not None and len(chars) > max_characters:
        raise SpecValidationError("characters", f"{len(chars)} characters exceed the limit of {max_characters}")
    for i, entry in enumerate(chars):
        _check_box(entry["bbox"], canvas, f"characters[{i}].bbox")
    for i, entry in enumerate(doc.get("dialogs", [])):
        _check_box(entry["bbox"], canvas, f"dialogs[{i}].bbox")


def _check_box(raw: list, canvas: tuple[int, int], path: str) -> BBox:
    try:
        box = BBox.from_list(raw)
    except (TypeError, ValueError) as exc:
        raise SpecValidationError(path, str(exc)) from exc
    if not box.inside(canvas[0], canvas[1]):
        raise SpecValidationError(path, f"box {box.as_list()} exceeds the {canvas[0]}x{canvas[1]} canvas")
    return box


def parse_panel_spec(
    doc: dict,
    resolver: Callable[[str], Image.Image],
    defaults: GenerationDefaults | None = None,
    max_characters: int | None = None,
    valid_sizes: list[tuple[int, int]] | None = None,
) -> PanelSpec:
    """Validate `doc` and resolve character references into images.

    `resolver` maps a `ref` string (id or path) to a PIL image; it should
    raise KeyError/FileNotFoundError for unknown refs, which surface as
    UnknownReferenceError with the field path.
    """
    defaults = defaults or GenerationDefaults()
    validate_panel_spec_doc(doc, max_characters=max_characters, valid_sizes=valid_sizes)
    size = (int(doc["size"][0]), int(doc["size"][1]))
    characters = []
    for i, entry in enumerate(doc.get("characters", [])):
        path = f"characters[{i}]"
        box = _check_box(entry["bbox"], size, f"{path}.bbox")
        try:
            image = resolver(entry["ref"])
        except (KeyError, FileNotFoundError) as exc:
            raise UnknownReferenceError(f"{path}.ref", entry["ref"]) from exc
        characters.append((image, box))
    dialogs = [
        _check_box(entry["bbox"], size, f"dialogs[{i}].bbox")
        for i, entry in enumerate(doc.get("dialogs", []))
    ]
    return PanelSpec(
        caption=doc["caption"],
        characters=characters,
        dialogs=dialogs,
        size=size,
        alpha=float(doc.get("alpha", defaults.alpha)),
        beta=float(doc.get("beta", defaults.beta)),
        seed=int(doc.get("seed", defaults.seed)),
        steps=int(doc.get("steps", defaults.steps)),
    )


def panel_spec_to_doc(spec: PanelSpec, refs: list[str] | None = None) -> dict:
    """Wire document for a runtime spec; `refs` supplies characters[].ref."""
    refs = refs or [f"character_{i}" for i in range(len(spec.characters))]
    return {
        "caption": spec.caption,
        "characters": [
            {"ref": refs[i], "bbox": box.as_list()} for i, (_, box) in enumerate(spec.characters)
        ],
        "dialogs": [{"bbox": box.as_list()} for box in spec.dialogs],
        "size": list(spec.size),
        "alpha": spec.alpha,
        "beta": spec.beta,
        "seed": spec.seed,
        "steps": spec.steps,
    }
