"""Training-pair sampling: where each character's source crop comes from.

For every character in a target panel the source crop is, with
probability `self_rate`, the character's own box in the target panel;
otherwise a uniformly drawn occurrence of the same page-local id from
another panel on the page. A character with no other occurrence falls
back to its target crop and is flagged, and the fallback counts toward
the self-source fraction so the sampler's totals stay honest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from PIL import Image

from panelforge.data.annotations import PageAnnotation, PanelAnnotation
from panelforge.geometry import BBox

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SourceCrop:
    character_id: int
    source_panel_index: int
    bbox: BBox  # page coordinates
    is_self: bool  # crop taken from the target panel itself
    is_fallback: bool  # no other occurrence existed


@dataclass(frozen=True)
class TrainingSample:
    page_id: str
    panel_index: int
    caption: str
    sources: tuple[SourceCrop, ...]  # one per target-panel character, same order
    character_boxes: tuple[BBox, ...]  # page coordinates, target panel
    dialog_boxes: tuple[BBox, ...]
    panel_bbox: BBox

    @property
    def self_source_count(self) -> int:
        return sum(1 for s in self.sources if s.is_self)


def cap_characters(panel: PanelAnnotation, n_c_cap: int) -> PanelAnnotation:
    """Keep the `n_c_cap` largest-area character boxes, drop the rest."""
    if len(panel.characters) <= n_c_cap:
        return panel
    keep = sorted(
        range(len(panel.characters)),
        key=lambda i: (-panel.characters[i].bbox.area, i),
    )[:n_c_cap]
    keep_set = set(keep)
    logger.warning(
        "panel has %d characters, keeping the %d largest boxes",
        len(panel.characters), n_c_cap,
    )
    return PanelAnnotation(
        bbox=panel.bbox,
        caption=panel.caption,
        characters=tuple(c for i, c in enumerate(panel.characters) if i in keep_set),
        dialogs=panel.dialogs,
        empty_caption_ok=panel.empty_caption_ok,
    )


def sample_training_pair(
    page: PageAnnotation,
    panel_index: int,
    self_rate: float,
    rng: np.random.Generator | int,
    n_c_cap: int | None = None,
) -> TrainingSample:
    if not 0.0 <= self_rate <= 1.0:
        raise ValueError(f"self_rate must be in [0, 1], got {self_rate}")
    if not 0 <= panel_index < len(page.panels):
        raise IndexError(f"panel_index {panel_index} out of range for page with {len(page.panels)} panels")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)

    panel = page.panels[panel_index]
    if n_c_cap is not None:
        panel = cap_characters(panel, n_c_cap)

    sources = []
    for inst in panel.characters:
        others = [
            (pi, occ)
            for pi, occ in page.occurrences(inst.character_id)
            if pi != panel_index
        ]
        take_self = rng.random() < self_rate
        if take_self or not others:
            sources.append(
                SourceCrop(
                    character_id=inst.character_id,
                    source_panel_index=panel_index,
                    bbox=inst.bbox,
                    is_self=True,
                    is_fallback=not take_self and not others,
                )
            )
        else:
            pi, occ = others[int(rng.integers(len(others)))]
            sources.append(
                SourceCrop(
                    character_id=inst.character_id,
                    source_panel_index=pi,
                    bbox=occ.bbox,
                    is_self=False,
                    is_fallback=False,
                )
            )
    return TrainingSample(
        page_id=page.page_id,
        panel_index=panel_index,
        caption=panel.caption,
        sources=tuple(sources),
        character_boxes=tuple(c.bbox for c in panel.characters),
        dialog_boxes=panel.dialogs,
        panel_bbox=panel.bbox,
    )


def crop_character(page_image: Image.Image, bbox: BBox, out_size: int = 64) -> Image.Image:
    """Crop a character box from the page, pad to square with white, resize.

    Manga backgrounds are white, so white padding avoids both aspect
    distortion and spurious dark borders.
    """
    crop = page_image.crop((bbox.x0, bbox.y0, bbox.x1, bbox.y1))
    side = max(crop.width, crop.height)
    padded = Image.new(page_image.mode, (side, side), color=255 if page_image.mode == "L" else (255, 255, 255))
    padded.paste(crop, ((side - crop.width) // 2, (side - crop.height) // 2))
    return padded.resize((out_size, out_size), Image.BILINEAR)
