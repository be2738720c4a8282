"""Page/panel annotation model, corpus loading, validation, and serialization.

One JSON document per page:

    {
      "page_id": str, "series": str, "image": str, "width": int, "height": int,
      "panels": [
        {
          "bbox": [x0, y0, x1, y1],
          "caption": str,
          "characters": [{"id": int, "bbox": [x0, y0, x1, y1]}],
          "dialogs": [{"bbox": [x0, y0, x1, y1]}]
        }
      ]
    }

Character IDs are page-local; they are never compared across pages.
Character and dialog boxes are clipped to their panel on load; a box that
vanishes under clipping is a validation error. Panels are stored in
reading order exactly as given. Corpus objects are immutable after load
and safe to share across workers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from panelforge.geometry import BBox

logger = logging.getLogger(__name__)


class AnnotationError(ValueError):
    """Malformed or invariant-violating annotation data.

    `where` carries a file/field path such as
    ``page_007.json: panels[2].characters[0].bbox``.
    """

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class CharacterInstance:
    character_id: int  # page-local
    bbox: BBox

    def __post_init__(self) -> None:
        if self.character_id < 0:
            raise ValueError(f"character_id must be >= 0, got {self.character_id}")


@dataclass(frozen=True)
class PanelAnnotation:
    bbox: BBox  # panel within page, page coordinates
    caption: str
    characters: tuple[CharacterInstance, ...]
    dialogs: tuple[BBox, ...]
    empty_caption_ok: bool = False

    def character_ids(self) -> list[int]:
        return [c.character_id for c in self.characters]


@dataclass(frozen=True)
class PageAnnotation:
    page_id: str
    series: str
    image_path: str
    width: int
    height: int
    panels: tuple[PanelAnnotation, ...]

    def occurrences(self, character_id: int) -> list[tuple[int, CharacterInstance]]:
        """All (panel_index, instance) pairs of one page-local character."""
        out = []
        for i, panel in enumerate(self.panels):
            for inst in panel.characters:
                if inst.character_id == character_id:
                    out.append((i, inst))
        return out


@dataclass(frozen=True)
class CorpusStats:
    pages: int
    panels: int
    char_instances: int
    dialogs: int
    series: int

    def as_dict(self) -> dict:
        return {
            "pages": self.pages,
            "panels": self.panels,
            "char_instances": self.char_instances,
            "dialogs": self.dialogs,
            "series": self.series,
        }


@dataclass(frozen=True)
class Corpus:
    root: str
    pages: tuple[PageAnnotation, ...] = field(default_factory=tuple)

    def stats(self) -> CorpusStats:
        panels = sum(len(p.panels) for p in self.pages)
        chars = sum(len(pa.characters) for p in self.pages for pa in p.panels)
        dialogs = sum(len(pa.dialogs) for p in self.pages for pa in p.panels)
        series = len({p.series for p in self.pages})
        return CorpusStats(len(self.pages), panels, chars, dialogs, series)

    def by_series(self) -> dict[str, list[PageAnnotation]]:
        out: dict[str, list[PageAnnotation]] = {}
        for page in self.pages:
            out.setdefault(page.series, []).append(page)
        return out

    def all_panels(self) -> list[tuple[PageAnnotation, int]]:
        return [(page, i) for page in self.pages for i in range(len(page.panels))]


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise AnnotationError(where, f"missing required field '{key}'")
    return doc[key]


def _parse_bbox(raw, where: str) -> BBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise AnnotationError(where, f"bbox must be a list of 4 integers, got {raw!r}")
    try:
        return BBox.from_list(raw)
    except (TypeError, ValueError) as exc:
        raise AnnotationError(where, str(exc)) from exc


def _clip_to_panel(box: BBox, panel: BBox, where: str) -> BBox:
    clipped = box.clip(panel)
    if clipped is None:
        raise AnnotationError(where, f"box {box.as_list()} lies outside its panel {panel.as_list()}")
    return clipped


def parse_page(doc: dict, where: str = "<memory>") -> PageAnnotation:
    """Parse and validate one page document. Raises AnnotationError."""
    page_id = _require(doc, "page_id", where)
    series = _require(doc, "series", where)
    image = _require(doc, "image", where)
    width = _require(doc, "width", where)
    height = _require(doc, "height", where)
    if not isinstance(width, int) or not isinstance(height, int) or width <= 0 or height <= 0:
        raise AnnotationError(where, f"width/height must be positive integers, got {width}x{height}")
    page_box = BBox(0, 0, width, height)

    panels = []
    for pi, pdoc in enumerate(_require(doc, "panels", where)):
        pw = f"{where}: panels[{pi}]"
        panel_box = _parse_bbox(_require(pdoc, "bbox", pw), f"{pw}.bbox")
        if not panel_box.inside(width, height):
            raise AnnotationError(f"{pw}.bbox", f"panel {panel_box.as_list()} exceeds page bounds {width}x{height}")
        caption = _require(pdoc, "caption", pw)
        if not isinstance(caption, str):
            raise AnnotationError(f"{pw}.caption", "caption must be a string")
        empty_ok = bool(pdoc.get("empty_caption_ok", False))
        if caption == "" and not empty_ok:
            raise AnnotationError(f"{pw}.caption", "empty caption without empty_caption_ok flag")

        characters = []
        for ci, cdoc in enumerate(pdoc.get("characters", [])):
            cw = f"{pw}.characters[{ci}]"
            cid = _require(cdoc, "id", cw)
            if not isinstance(cid, int) or cid < 0:
                raise AnnotationError(f"{cw}.id", f"character id must be a non-negative integer, got {cid!r}")
            cbox = _parse_bbox(_require(cdoc, "bbox", cw), f"{cw}.bbox")
            characters.append(CharacterInstance(cid, _clip_to_panel(cbox, panel_box, f"{cw}.bbox")))

        dialogs = []
        for di, ddoc in enumerate(pdoc.get("dialogs", [])):
            dw = f"{pw}.dialogs[{di}]"
            dbox = _parse_bbox(_require(ddoc, "bbox", dw), f"{dw}.bbox")
            dialogs.append(_clip_to_panel(dbox, panel_box, f"{dw}.bbox"))

        panels.append(
            PanelAnnotation(
                bbox=panel_box,
                caption=caption,
                characters=tuple(characters),
                dialogs=tuple(dialogs),
                empty_caption_ok=empty_ok,
            )
        )
    # page_box currently only anchors panel bounds checking
    del page_box
    return PageAnnotation(
        page_id=str(page_id),
        series=str(series),
        image_path=str(image),
        width=width,
        height=height,
        panels=tuple(panels),
    )


def page_to_doc(page: PageAnnotation) -> dict:
    """Canonical JSON document for one page (inverse of parse_page)."""
    return {
        "page_id": page.page_id,
        "series": page.series,
        "image": page.image_path,
        "width": page.width,
        "height": page.height,
        "panels": [
            {
                "bbox": panel.bbox.as_list(),
                "caption": panel.caption,
                **({"empty_caption_ok": True} if panel.empty_caption_ok else {}),
                "characters": [
                    {"id": c.character_id, "bbox": c.bbox.as_list()} for c in panel.characters
                ],
                "dialogs": [{"bbox": d.as_list()} for d in panel.dialogs],
            }
            for panel in page.panels
        ],
    }


def serialize_page(page: PageAnnotation) -> str:
    return json.dumps(page_to_doc(page), indent=2, sort_keys=False) + "\n"


def load_page_file(path: Path, check_image: bool = True) -> PageAnnotation:
    where = path.name
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise AnnotationError(where, f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise AnnotationError(where, "top-level document must be an object")
    page = parse_page(doc, where)
    if check_image:
        image_file = path.parent / page.image_path
        if not image_file.exists():
            raise AnnotationError(f"{where}: image", f"image file not found: {page.image_path}")
        from PIL import Image

        with Image.open(image_file) as img:
            if img.size != (page.width, page.height):
                raise AnnotationError(
                    f"{where}: width/height",
                    f"declared {page.width}x{page.height} but image file is {img.size[0]}x{img.size[1]}",
                )
    return page


def load_corpus(root_path: str | Path, check_images: bool = True) -> Corpus:
    """Load every `*.json` page document under `root_path` (sorted by name).

    Raises AnnotationError on the first malformed file, naming the file and
    field. An empty or missing-page directory yields an empty corpus.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise AnnotationError(str(root), "corpus root is not a directory")
    pages = []
    seen_ids: set[str] = set()
    for path in sorted(root.glob("*.json")):
        page = load_page_file(path, check_image=check_images)
        if page.page_id in seen_ids:
            raise AnnotationError(path.name, f"duplicate page_id {page.page_id!r}")
        seen_ids.add(page.page_id)
        pages.append(page)
    corpus = Corpus(root=str(root), pages=tuple(pages))
    stats = corpus.stats()
    logger.info(
        "loaded corpus %s: %d pages, %d panels, %d character instances, %d dialogs",
        root, stats.pages, stats.panels, stats.char_instances, stats.dialogs,
    )
    return corpus


def save_corpus(corpus: Corpus, root_path: str | Path) -> None:
    """Write one canonical JSON file per page into `root_path`."""
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    for page in corpus.pages:
        (root / f"{page.page_id}.json").write_text(serialize_page(page))
