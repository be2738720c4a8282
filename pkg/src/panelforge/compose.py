"""Page compositing: run panel specs and place the results on a page grid.

Purely mechanical, by design: panels are generated independently, pasted
into their boxes on a white canvas, and framed with a one-pixel black
border. Reading order (right to left, top to bottom) is whatever order
the script lists and is preserved in the sidecar metadata.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from PIL import Image, ImageDraw

from panelforge.geometry import BBox, intersection_area
from panelforge.models.generator import PanelGeneratorModel
from panelforge.specs import GenerationDefaults, SpecValidationError, parse_panel_spec, validate_against_schema


@dataclass
class PageScript:
    width: int
    height: int
    panels: list[tuple[BBox, dict]]  # (page box, panel spec document)


def parse_page_script(doc: dict) -> PageScript:
    validate_against_schema(doc, "page_script")
    width = doc["page"]["width"]
    height = doc["page"]["height"]
    panels = []
    for i, entry in enumerate(doc["panels"]):
        path = f"panels[{i}].bbox"
        try:
            box = BBox.from_list(entry["bbox"])
        except (TypeError, ValueError) as exc:
            raise SpecValidationError(path, str(exc)) from exc
        if not box.inside(width, height):
            raise SpecValidationError(path, f"panel box {box.as_list()} exceeds the {width}x{height} page")
        panels.append((box, entry["spec"]))
    for i in range(len(panels)):
        for j in range(i + 1, len(panels)):
            if intersection_area(panels[i][0], panels[j][0]) > 0:
                raise SpecValidationError(
                    f"panels[{j}].bbox", f"overlaps panels[{i}].bbox ({panels[i][0].as_list()})"
                )
    return PageScript(width=width, height=height, panels=panels)


def compose_page(
    script: PageScript,
    model: PanelGeneratorModel,
    resolver,
    defaults: GenerationDefaults | None = None,
) -> tuple[Image.Image, list[dict]]:
    """Generate panels sequentially and composite. Returns (page, metadata)."""
    page = Image.new("L", (script.width, script.height), color=255)
    draw = ImageDraw.Draw(page)
    metadata = []
    for index, (box, spec_doc) in enumerate(script.panels):
        spec = parse_panel_spec(
            spec_doc,
            resolver=resolver,
            defaults=defaults,
            max_characters=model.config.n_c_cap,
            valid_sizes=[tuple(b) for b in model.config.buckets],
        )
        panel = model.generate(spec)
        if panel.size != (box.width, box.height):
            panel = panel.resize((box.width, box.height), Image.BILINEAR)
        page.paste(panel, (box.x0, box.y0))
        draw.rectangle([box.x0, box.y0, box.x1 - 1, box.y1 - 1], outline=0, width=1)
        metadata.append({"order": index, "bbox": box.as_list(), "caption": spec.caption, "seed": spec.seed})
    return page, metadata


def write_page(page: Image.Image, metadata: list[dict], out_path: str | Path) -> None:
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    page.save(out)
    Path(str(out) + ".meta.json").write_text(json.dumps({"panels": metadata}, indent=2) + "\n")
