"""Resolution-bucketed batching for variable-size panels.

Every panel maps to exactly one bucket: nearest by aspect ratio first
(absolute log-ratio distance), nearest by area on ties. Batches never mix
buckets, and each panel appears exactly once per epoch. Iterators are
single-consumer; shuffling is governed by an explicit seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from panelforge.data.annotations import Corpus, PageAnnotation

DEFAULT_BUCKETS: tuple[tuple[int, int], ...] = ((128, 128), (128, 192), (192, 128), (256, 256))


@dataclass(frozen=True)
class PanelRef:
    page: PageAnnotation
    panel_index: int

    @property
    def size(self) -> tuple[int, int]:
        box = self.page.panels[self.panel_index].bbox
        return (box.width, box.height)


def assign_bucket(panel_wh: tuple[int, int], buckets: list[tuple[int, int]] | tuple[tuple[int, int], ...]) -> int:
    """Index of the nearest bucket: aspect ratio first, then area."""
    if not buckets:
        raise ValueError("bucket list must be non-empty")
    w, h = panel_wh
    ar = math.log(w / h)
    scored = []
    for i, (bw, bh) in enumerate(buckets):
        ar_dist = abs(ar - math.log(bw / bh))
        area_dist = abs(w * h - bw * bh)
        scored.append((ar_dist, area_dist, i))
    scored.sort()
    return scored[0][2]


def bucket_batches(
    corpus: Corpus,
    bucket_edges: list[tuple[int, int]] | tuple[tuple[int, int], ...] = DEFAULT_BUCKETS,
    max_batch: int = 8,
    seed: int | None = None,
    downsample_factor: int = 8,
):
    """Yield (bucket_wh, list[PanelRef]) batches, one epoch over the corpus."""
    if not bucket_edges:
        raise ValueError("bucket_edges must be non-empty")
    for bw, bh in bucket_edges:
        if bw % downsample_factor or bh % downsample_factor:
            raise ValueError(
                f"bucket {bw}x{bh} is not a multiple of the latent downsample factor {downsample_factor}"
            )
    if max_batch < 1:
        raise ValueError("max_batch must be >= 1")

    per_bucket: dict[int, list[PanelRef]] = {}
    for page, pi in corpus.all_panels():
        ref = PanelRef(page, pi)
        per_bucket.setdefault(assign_bucket(ref.size, bucket_edges), []).append(ref)

    bucket_order = sorted(per_bucket)
    if seed is not None:
        rng = np.random.default_rng(seed)
        for refs in per_bucket.values():
            perm = rng.permutation(len(refs))
            refs[:] = [refs[i] for i in perm]
        bucket_order = [bucket_order[i] for i in rng.permutation(len(bucket_order))]

    for bi in bucket_order:
        refs = per_bucket[bi]
        for start in range(0, len(refs), max_batch):
            yield tuple(bucket_edges[bi]), refs[start : start + max_batch]
