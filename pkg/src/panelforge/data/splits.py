"""Deterministic per-series train/eval splitting."""

from __future__ import annotations

import numpy as np

from panelforge.data.annotations import Corpus


class SplitError(ValueError):
    pass


def make_split(corpus: Corpus, eval_pages_per_series: int, seed: int = 0) -> tuple[Corpus, Corpus]:
    """Hold out exactly `eval_pages_per_series` pages from every series.

    Deterministic in `seed`; pages are shuffled per series (series name
    salted into the stream so reordering input files cannot change the
    draw) and the first k go to eval. Every series must keep at least one
    training page.
    """
    if eval_pages_per_series < 0:
        raise SplitError("eval_pages_per_series must be >= 0")
    train_pages = []
    eval_pages = []
    for series, pages in sorted(corpus.by_series().items()):
        if eval_pages_per_series > 0 and len(pages) <= eval_pages_per_series:
            raise SplitError(
                f"series {series!r} has {len(pages)} pages; needs more than "
                f"{eval_pages_per_series} to keep a non-empty train split"
            )
        salt = np.frombuffer(series.encode("utf-8"), dtype=np.uint8)
        rng = np.random.default_rng([seed, *salt.tolist()])
        order = rng.permutation(len(pages))
        picked = set(order[:eval_pages_per_series].tolist())
        for i, page in enumerate(sorted(pages, key=lambda p: p.page_id)):
            (eval_pages if i in picked else train_pages).append(page)
    train_pages.sort(key=lambda p: p.page_id)
    eval_pages.sort(key=lambda p: p.page_id)
    return (
        Corpus(root=corpus.root, pages=tuple(train_pages)),
        Corpus(root=corpus.root, pages=tuple(eval_pages)),
    )
