"""Desk-scale metric suite: dialog-box F1 with greedy IoU matching,
embedding-based image and character similarities, and a small-sample
distribution distance. Embedders and detectors are injected, so the same
machinery runs with toy stand-ins here and real scorers elsewhere.
"""

from __future__ import annotations

import logging

import numpy as np

from panelforge.geometry import BBox, iou

logger = logging.getLogger(__name__)


def dialog_f1(
    predicted: list[BBox],
    truth: list[BBox],
    iou_threshold: float = 0.5,
) -> tuple[float, float, float]:
    """Greedy matching in descending IoU order; one match per box each side.

    Both sets empty -> (1, 1, 1); exactly one empty -> zeros. A pair may
    match only at IoU >= threshold.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    if not predicted and not truth:
        return (1.0, 1.0, 1.0)
    if not predicted or not truth:
        return (0.0, 0.0, 0.0)
    pairs = sorted(
        ((iou(p, t), pi, ti) for pi, p in enumerate(predicted) for ti, t in enumerate(truth)),
        key=lambda x: (-x[0], x[1], x[2]),
    )
    used_p: set[int] = set()
    used_t: set[int] = set()
    matches = 0
    for score, pi, ti in pairs:
        if score < iou_threshold:
            break
        if pi in used_p or ti in used_t:
            continue
        used_p.add(pi)
        used_t.add(ti)
        matches += 1
    precision = matches / len(predicted)
    recall = matches / len(truth)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return (precision, recall, f1)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def character_similarity(generated, char_boxes: list[BBox], reference_crops: list, embedder) -> float | None:
    """Mean cosine similarity between generated-crop and reference embeddings.

    `generated` and reference crops are PIL images; `embedder` maps an
    image to a 1-D feature vector. No characters -> None (missing, never
    zero).
    """
    if len(char_boxes) != len(reference_crops):
        raise ValueError(f"{len(char_boxes)} boxes but {len(reference_crops)} reference crops")
    if not char_boxes:
        return None
    sims = []
    for box, ref in zip(char_boxes, reference_crops):
        if not box.inside(generated.width, generated.height):
            raise ValueError(f"character box {box.as_list()} outside the generated image")
        crop = generated.crop((box.x0, box.y0, box.x1, box.y1))
        sims.append(cosine_similarity(embedder(crop), embedder(ref)))
    return float(np.mean(sims))


def frechet_distance(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Fréchet distance between Gaussian fits of two feature sets."""
    import scipy.linalg

    mu_a, mu_b = features_a.mean(axis=0), features_b.mean(axis=0)
    cov_a = np.cov(features_a, rowvar=False)
    cov_b = np.cov(features_b, rowvar=False)
    cov_a = np.atleast_2d(cov_a)
    cov_b = np.atleast_2d(cov_b)
    covmean, _ = scipy.linalg.sqrtm(cov_a @ cov_b, disp=False)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a + cov_b - 2.0 * covmean))
