"""Deterministic synthetic toy corpus for smoke tests and demos.

Pages are grayscale PNGs with panels laid out on a grid. Each page-local
character id maps to a distinct glyph (shape + gray level + stripe
pattern) so identity is visually learnable at tiny resolutions; dialogs
render as outlined ellipses. Captions combine a small closed vocabulary
so text conditioning carries real signal.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from panelforge.data.annotations import (
    Corpus,
    PageAnnotation,
    PanelAnnotation,
    CharacterInstance,
    load_corpus,
    serialize_page,
)
from panelforge.geometry import BBox

ADJECTIVES = ("quiet", "stormy", "bright", "dark", "crowded", "empty", "tense", "calm")
SCENES = ("street", "rooftop", "classroom", "forest", "station", "bridge", "alley", "shore")
SHAPES = ("ellipse", "rect", "triangle", "diamond", "cross")
ORDINALS = (
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth",
    "ninth", "tenth", "eleventh", "twelfth", "thirteenth", "fourteenth", "fifteenth",
    "sixteenth", "seventeenth", "eighteenth", "nineteenth", "twentieth",
)


def draw_character_glyph(draw: ImageDraw.ImageDraw, box: BBox, character_id: int, variant: int = 0) -> None:
    """`variant` changes pose-like surface detail while keeping identity cues."""
    shape = SHAPES[character_id % len(SHAPES)]
    gray = 48 + (character_id * 53) % 144
    x0, y0, x1, y1 = box.x0, box.y0, box.x1 - 1, box.y1 - 1
    if shape == "ellipse":
        draw.ellipse([x0, y0, x1, y1], fill=gray, outline=0, width=2)
    elif shape == "rect":
        draw.rectangle([x0, y0, x1, y1], fill=gray, outline=0, width=2)
    elif shape == "triangle":
        draw.polygon([(x0, y1), (x1, y1), ((x0 + x1) // 2, y0)], fill=gray, outline=0)
    elif shape == "diamond":
        cx, cy = (x0 + x1) // 2, (y0 + y1) // 2
        draw.polygon([(cx, y0), (x1, cy), (cx, y1), (x0, cy)], fill=gray, outline=0)
    else:
        w = max(2, (x1 - x0) // 3)
        cx, cy = (x0 + x1) // 2, (y0 + y1) // 2
        draw.rectangle([cx - w // 2, y0, cx + w // 2, y1], fill=gray, outline=0)
        draw.rectangle([x0, cy - w // 2, x1, cy + w // 2], fill=gray, outline=0)
    # stripe direction distinguishes ids sharing a shape
    if (character_id // len(SHAPES)) % 2 == 1:
        for x in range(x0 + 3, x1 - 2, 6):
            draw.line([x, y0 + 2, x, y1 - 2], fill=255, width=1)
    if variant % 3 == 1:
        for y in range(y0 + 3, y1 - 2, 5):
            draw.line([x0 + 2, y, x1 - 2, y], fill=255, width=1)
    elif variant % 3 == 2:
        draw.line([x0, y0, x1, y1], fill=0, width=2)
        draw.line([x0, y1, x1, y0], fill=0, width=2)


def draw_dialog_bubble(draw: ImageDraw.ImageDraw, box: BBox) -> None:
    draw.ellipse([box.x0, box.y0, box.x1 - 1, box.y1 - 1], fill=255, outline=0, width=2)
    # short horizontal strokes suggest (unreadable) text
    step = max(4, box.height // 4)
    for y in range(box.y0 + step, box.y1 - step // 2, step):
        draw.line([box.x0 + box.width // 4, y, box.x1 - box.width // 4, y], fill=128, width=1)


def _caption(rng: np.random.Generator, char_ids: list[int]) -> str:
    adj = ADJECTIVES[int(rng.integers(len(ADJECTIVES)))]
    scene = SCENES[int(rng.integers(len(SCENES)))]
    if not char_ids:
        return f"a {adj} {scene} with nobody around"
    names = " and ".join(f"figure {cid}" for cid in char_ids)
    return f"a {adj} {scene} where {names} stands"


def _random_box(rng: np.random.Generator, panel: BBox, min_frac: float, max_frac: float) -> BBox:
    w = int(panel.width * (min_frac + (max_frac - min_frac) * rng.random()))
    h = int(panel.height * (min_frac + (max_frac - min_frac) * rng.random()))
    w, h = max(w, 8), max(h, 8)
    x0 = panel.x0 + int(rng.integers(max(1, panel.width - w)))
    y0 = panel.y0 + int(rng.integers(max(1, panel.height - h)))
    return BBox(x0, y0, min(x0 + w, panel.x1), min(y0 + h, panel.y1))


def make_synthetic_corpus(
    root: str | Path,
    n_series: int = 2,
    pages_per_series: int = 4,
    panel_grid: tuple[int, int] = (1, 2),
    panel_size: tuple[int, int] = (128, 128),
    max_characters: int = 2,
    max_dialogs: int = 2,
    seed: int = 0,
) -> Corpus:
    """Generate a corpus under `root` and load it back validated.

    `panel_grid` is (rows, cols) of equally sized panels per page; the
    same page-local character ids recur across a page's panels so the
    same-page source sampler has material to work with.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows, cols = panel_grid
    pw, ph = panel_size
    page_w, page_h = pw * cols, ph * rows

    for si in range(n_series):
        series = f"series_{si:02d}"
        for pg in range(pages_per_series):
            page_id = f"{series}_page_{pg:03d}"
            image = Image.new("L", (page_w, page_h), color=255)
            draw = ImageDraw.Draw(image)
            page_char_ids = list(range(int(rng.integers(1, max_characters + 1)) if max_characters else 0))

            panels = []
            for r in range(rows):
                for c in range(cols):
                    panel_box = BBox(c * pw, r * ph, (c + 1) * pw, (r + 1) * ph)
                    draw.rectangle(
                        [panel_box.x0, panel_box.y0, panel_box.x1 - 1, panel_box.y1 - 1],
                        outline=0, width=1,
                    )
                    n_chars = int(rng.integers(0, len(page_char_ids) + 1)) if page_char_ids else 0
                    chosen = sorted(
                        int(i) for i in rng.choice(len(page_char_ids), size=n_chars, replace=False)
                    ) if n_chars else []
                    characters = []
                    for cid in chosen:
                        cbox = _random_box(rng, panel_box, 0.25, 0.45)
                        draw_character_glyph(draw, cbox, cid)
                        characters.append(CharacterInstance(cid, cbox))
                    dialogs = []
                    for _ in range(int(rng.integers(0, max_dialogs + 1))):
                        dbox = _random_box(rng, panel_box, 0.2, 0.35)
                        draw_dialog_bubble(draw, dbox)
                        dialogs.append(dbox)
                    panels.append(
                        PanelAnnotation(
                            bbox=panel_box,
                            caption=_caption(rng, [ci.character_id for ci in characters]),
                            characters=tuple(characters),
                            dialogs=tuple(dialogs),
                        )
                    )
            page = PageAnnotation(
                page_id=page_id,
                series=series,
                image_path=f"images/{page_id}.png",
                width=page_w,
                height=page_h,
                panels=tuple(panels),
            )
            image.save(root / page.image_path)
            (root / f"{page_id}.json").write_text(serialize_page(page))
    return load_corpus(root)


def make_pair_fixture(root: str | Path, n_pairs: int = 20, panel_size: int = 64, seed: int = 11) -> Corpus:
    """Pages of two panels showing one character in two different variants.

    With a source sampler that prefers other panels, the source crop is
    always the other panel's variant, so adapting source features toward
    the target panel's features is a real (caption-keyed) regression
    problem rather than an identity map.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    s = panel_size
    for k in range(n_pairs):
        page_id = f"pair_page_{k:03d}"
        image = Image.new("L", (2 * s, s), color=255)
        draw = ImageDraw.Draw(image)
        cid = k % 3
        panels = []
        for p in range(2):
            panel_box = BBox(p * s, 0, (p + 1) * s, s)
            draw.rectangle([panel_box.x0, panel_box.y0, panel_box.x1 - 1, panel_box.y1 - 1], outline=0, width=1)
            left = (k + p) % 2 == 0
            cbox = (
                BBox(panel_box.x0 + 2, s // 4, panel_box.x0 + s // 2, s - 4)
                if left
                else BBox(panel_box.x0 + s // 2, s // 4, panel_box.x1 - 2, s - 4)
            )
            variant = (k + 2 * p) % 3
            draw_character_glyph(draw, cbox, cid, variant=variant)
            caption = (
                f"a {ADJECTIVES[(k + p) % len(ADJECTIVES)]} {SCENES[(k * 2 + p) % len(SCENES)]} "
                f"where figure {cid} looks {('calm', 'lively', 'fierce')[variant]}"
            )
            panels.append(
                PanelAnnotation(
                    bbox=panel_box,
                    caption=caption,
                    characters=(CharacterInstance(cid, cbox),),
                    dialogs=(),
                )
            )
        page = PageAnnotation(
            page_id=page_id,
            series="pairs",
            image_path=f"images/{page_id}.png",
            width=2 * s,
            height=s,
            panels=tuple(panels),
        )
        image.save(root / page.image_path)
        (root / f"{page_id}.json").write_text(serialize_page(page))
    del rng
    return load_corpus(root)


def make_overfit_fixture(root: str | Path, n_panels: int = 10, panel_size: int = 64, seed: int = 7) -> Corpus:
    """Small single-panel-per-page corpus with visually distinct panels.

    Used for memorization-style training checks: each panel gets a unique
    caption, character layout, and dialog layout.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    s = panel_size
    for k in range(n_panels):
        page_id = f"fixture_page_{k:03d}"
        # distinct background level per panel: memorization targets must stay
        # distinguishable after the lossy fixed-factor codec round trip
        bg = 250 - (k * 120) // max(n_panels - 1, 1)
        image = Image.new("L", (s, s), color=bg)
        draw = ImageDraw.Draw(image)
        panel_box = BBox(0, 0, s, s)

        cid = k % 4
        left = k % 2 == 0
        cbox = BBox(2, s // 4, s // 2 - 2, s - 2) if left else BBox(s // 2 + 2, s // 4, s - 2, s - 2)
        draw_character_glyph(draw, cbox, cid)

        dialogs = []
        if k % 3 != 2:
            dbox = BBox(s // 2 + 4, 2, s - 4, s // 4) if left else BBox(4, 2, s // 2 - 4, s // 4)
            draw_dialog_bubble(draw, dbox)
            dialogs.append(dbox)

        caption = (
            f"{ORDINALS[k % len(ORDINALS)]} scene: a {ADJECTIVES[k % len(ADJECTIVES)]} "
            f"{SCENES[(k * 3) % len(SCENES)]} where figure {cid} stands on the "
            f"{'left' if left else 'right'}"
        )
        page = PageAnnotation(
            page_id=page_id,
            series="fixture",
            image_path=f"images/{page_id}.png",
            width=s,
            height=s,
            panels=(
                PanelAnnotation(
                    bbox=panel_box,
                    caption=caption,
                    characters=(CharacterInstance(cid, cbox),),
                    dialogs=tuple(dialogs),
                ),
            ),
        )
        image.save(root / page.image_path)
        (root / f"{page_id}.json").write_text(serialize_page(page))
    del rng
    return load_corpus(root)
