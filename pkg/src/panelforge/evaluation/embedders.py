"""Pluggable scorer contracts and fixed-seed toy defaults.

An embedder maps a PIL image to a 1-D numpy feature vector; a text-image
scorer maps (image, caption) to a similarity in [-1, 1]; a dialog
detector maps an image to predicted dialog boxes. The defaults reuse the
package's own toy encoders built from a fixed seed, independent of any
checkpoint, so scores are comparable across evaluated models.
"""

from __future__ import annotations

from typing import Callable, Protocol

import numpy as np
import torch
from PIL import Image

from panelforge.geometry import BBox
from panelforge.models.codec import pil_to_tensor
from panelforge.models.encoders import EncoderConfig, FeatureExtractor
from panelforge.models.text_encoder import HashTokenizer

Embedder = Callable[[Image.Image], np.ndarray]
TextImageScorer = Callable[[Image.Image, str], float]


class DialogDetector(Protocol):
    def __call__(self, image: Image.Image) -> list[BBox]: ...


class FixedSeedEmbedder:
    """Deterministic image embedder built from a seeded toy encoder."""

    def __init__(self, seed: int = 1234, crop_size: int = 64):
        torch.manual_seed(seed)
        self.extractor = FeatureExtractor(
            EncoderConfig(crop_size=crop_size, patch_size=crop_size // 4, local_dim=32, global_dim=32)
        )
        self.extractor.eval()
        self.crop_size = crop_size

    def __call__(self, image: Image.Image) -> np.ndarray:
        img = image.convert("L") if image.mode != "L" else image
        side = max(img.size)
        padded = Image.new("L", (side, side), color=255)
        padded.paste(img, ((side - img.width) // 2, (side - img.height) // 2))
        tensor = pil_to_tensor(padded, (self.crop_size, self.crop_size))
        with torch.no_grad():
            out = self.extractor.encode_character(tensor)
        return np.concatenate(
            [out.global_vector.numpy(), out.local_tokens.mean(dim=0).numpy()]
        ).astype(np.float64)


class FixedSeedAlignmentScorer:
    """Toy text-image alignment: fixed random projections into a shared space.

    Structurally a CLIP-style score (cosine between an image embedding
    and a caption embedding); the projections are arbitrary but frozen,
    which is all the desk-scale trend checks need.
    """

    def __init__(self, seed: int = 4321, dim: int = 32, vocab_size: int = 512):
        self.embedder = FixedSeedEmbedder(seed=seed)
        self.tokenizer = HashTokenizer(vocab_size=vocab_size, max_len=32)
        rng = np.random.default_rng(seed)
        self.image_proj = rng.normal(size=(64, dim)) / np.sqrt(64)
        self.word_table = rng.normal(size=(vocab_size, dim)) / np.sqrt(dim)

    def __call__(self, image: Image.Image, caption: str) -> float:
        img_vec = self.embedder(image) @ self.image_proj
        ids = [i for i in self.tokenizer.encode(caption, pad=False)]
        if not ids:
            return 0.0
        txt_vec = self.word_table[ids].mean(axis=0)
        na, nb = np.linalg.norm(img_vec), np.linalg.norm(txt_vec)
        if na == 0 or nb == 0:
            return 0.0
        return float(np.clip(img_vec @ txt_vec / (na * nb), -1.0, 1.0))


class TruthDialogDetector:
    """Perfect-recall stand-in: echoes the ground-truth boxes it is given.

    Useful for plumbing checks (F1 must be exactly 1.0 end to end); a
    real detector implements the same one-argument call.
    """

    def __init__(self):
        self._truth: list[BBox] = []

    def set_truth(self, boxes: list[BBox]) -> None:
        self._truth = list(boxes)

    def __call__(self, image: Image.Image) -> list[BBox]:
        return [b for b in self._truth if b.inside(image.width, image.height)]
