"""Corpus-level evaluation: generate one panel per eval record and score
it against the ground truth with whatever oracles are plugged in.

The report carries one scalar per metric plus sample counts and the
config hash; missing oracles mark their metric unavailable instead of
failing the run. Output is JSON plus a rendered text table, with a CSV
and a bar-chart PNG written alongside when an output directory is given.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from panelforge.data.annotations import Corpus
from panelforge.data.bucketing import assign_bucket
from panelforge.data.sampling import cap_characters, crop_character, sample_training_pair
from panelforge.evaluation.embedders import DialogDetector, Embedder, TextImageScorer, TruthDialogDetector
from panelforge.evaluation.metrics import character_similarity, cosine_similarity, dialog_f1, frechet_distance
from panelforge.geometry import BBox
from panelforge.models.generator import PanelGeneratorModel
from panelforge.specs import PanelSpec

logger = logging.getLogger(__name__)

METRIC_RANGES = {
    "dialog_f1": (0.0, 1.0),
    "char_sim": (-1.0, 1.0),
    "image_sim": (-1.0, 1.0),
    "text_align": (-1.0, 1.0),
}


@dataclass
class EvalOracles:
    embedder: Embedder | None = None
    text_scorer: TextImageScorer | None = None
    dialog_detector: DialogDetector | None = None


@dataclass
class MetricReport:
    metrics: dict[str, float | None]
    counts: dict[str, int]
    config_hash: str
    warnings: list[str] = field(default_factory=list)

    def validate_ranges(self) -> None:
        for name, (lo, hi) in METRIC_RANGES.items():
            value = self.metrics.get(name)
            if value is not None and not lo <= value <= hi:
                raise ValueError(f"metric {name}={value} outside valid range [{lo}, {hi}]")

    def to_json_dict(self) -> dict:
        return {
            "metrics": self.metrics,
            "counts": self.counts,
            "config_hash": self.config_hash,
            "warnings": self.warnings,
        }

    def render_text(self) -> str:
        order = ["fid", "text_align", "image_sim", "char_sim", "dialog_f1"]
        names = [n for n in order if n in self.metrics] + [
            n for n in sorted(self.metrics) if n not in order
        ]
        header = " | ".join(f"{n:>10}" for n in names)
        plain = " | ".join(
            f"{self.metrics[n]:>10.4f}" if self.metrics[n] is not None else f"{'n/a':>10}" for n in names
        )
        counts = " | ".join(f"{self.counts.get(n, 0):>10}" for n in names)
        rule = "-" * len(header)
        lines = [header, rule, plain, counts + "  (samples)"]
        if self.warnings:
            lines += [rule] + [f"! {w}" for w in self.warnings]
        return "\n".join(lines)

    def write(self, out_path: str | Path, figures: bool = True) -> None:
        """JSON to `out_path`; CSV and bar chart next to it."""
        out = Path(out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")
        csv_path = out.with_suffix(".csv")
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value", "samples"])
            for name in sorted(self.metrics):
                value = self.metrics[name]
                writer.writerow([name, "" if value is None else f"{value:.6f}", self.counts.get(name, 0)])
        if figures:
            from panelforge.plotting import save_metric_bars

            shown = {k: v for k, v in self.metrics.items() if v is not None}
            if shown:
                save_metric_bars(shown, out.with_suffix(".png"))


def _scale_box(box: BBox, src_wh: tuple[int, int], dst_wh: tuple[int, int]) -> BBox:
    sw, sh = src_wh
    dw, dh = dst_wh
    x0 = box.x0 * dw // sw
    y0 = box.y0 * dh // sh
    x1 = max(x0 + 1, -(-box.x1 * dw // sw))  # ceil
    y1 = max(y0 + 1, -(-box.y1 * dh // sh))
    return BBox(x0, y0, min(x1, dw), min(y1, dh))


def run_eval(
    model: PanelGeneratorModel,
    eval_corpus: Corpus,
    oracles: EvalOracles,
    steps: int | None = None,
    seed: int = 0,
    fid_floor: int = 10,
    alpha: float | None = None,
    beta: float | None = None,
) -> MetricReport:
    cfg = model.config
    rng = np.random.default_rng(seed)
    buckets = list(cfg.buckets)
    root = Path(eval_corpus.root)

    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    gen_feats: list[np.ndarray] = []
    ref_feats: list[np.ndarray] = []
    warnings: list[str] = []

    def add(name: str, value: float | None):
        if value is None:
            return
        sums[name] = sums.get(name, 0.0) + value
        counts[name] = counts.get(name, 0) + 1

    panel_count = 0
    for page, panel_index in eval_corpus.all_panels():
        panel = cap_characters(page.panels[panel_index], cfg.n_c_cap)
        page_img = Image.open(root / page.image_path).convert("L")
        bucket_wh = buckets[assign_bucket((panel.bbox.width, panel.bbox.height), buckets)]

        # eval protocol: source crops are drawn from the same page,
        # preferring panels other than the target
        sample = sample_training_pair(page, panel_index, 0.0, rng, n_c_cap=cfg.n_c_cap)
        references = [crop_character(page_img, src.bbox, cfg.crop_size) for src in sample.sources]

        origin = panel.bbox
        panel_wh = (origin.width, origin.height)
        char_boxes = [
            _scale_box(b.shift(-origin.x0, -origin.y0), panel_wh, bucket_wh) for b in sample.character_boxes
        ]
        dialog_boxes = [
            _scale_box(b.shift(-origin.x0, -origin.y0), panel_wh, bucket_wh) for b in sample.dialog_boxes
        ]
        spec = PanelSpec(
            caption=panel.caption,
            characters=list(zip(references, char_boxes)),
            dialogs=dialog_boxes,
            size=bucket_wh,
            alpha=cfg.alpha_infer if alpha is None else alpha,
            beta=cfg.beta if beta is None else beta,
            seed=int(rng.integers(2**31)),
            steps=steps or cfg.steps,
        )
        generated = model.generate(spec)
        truth_img = page_img.crop((origin.x0, origin.y0, origin.x1, origin.y1)).resize(
            bucket_wh, Image.BILINEAR
        )
        panel_count += 1

        if oracles.embedder is not None:
            g = oracles.embedder(generated)
            r = oracles.embedder(truth_img)
            gen_feats.append(g)
            ref_feats.append(r)
            add("image_sim", cosine_similarity(g, r))
            add("char_sim", character_similarity(generated, char_boxes, references, oracles.embedder))
        if oracles.text_scorer is not None:
            add("text_align", oracles.text_scorer(generated, panel.caption))
        if oracles.dialog_detector is not None:
            detector = oracles.dialog_detector
            if isinstance(detector, TruthDialogDetector):
                detector.set_truth(dialog_boxes)
            _, _, f1 = dialog_f1(detector(generated), dialog_boxes)
            add("dialog_f1", f1)

    metrics: dict[str, float | None] = {
        name: (sums[name] / counts[name] if counts.get(name) else None)
        for name in ("image_sim", "char_sim", "text_align", "dialog_f1")
    }
    for name, oracle in (
        ("image_sim", oracles.embedder),
        ("char_sim", oracles.embedder),
        ("text_align", oracles.text_scorer),
        ("dialog_f1", oracles.dialog_detector),
    ):
        if oracle is None:
            warnings.append(f"{name}: oracle not provided, metric unavailable")

    if oracles.embedder is not None and panel_count >= fid_floor:
        metrics["fid"] = frechet_distance(np.stack(gen_feats), np.stack(ref_feats))
        counts["fid"] = panel_count
    else:
        metrics["fid"] = None
        if oracles.embedder is not None and 0 < panel_count < fid_floor:
            warnings.append(
                f"fid: only {panel_count} samples (< floor {fid_floor}); distribution distance suppressed"
            )

    report = MetricReport(
        metrics=metrics,
        counts=counts,
        config_hash=cfg.config_hash(),
        warnings=warnings,
    )
    report.validate_ranges()
    return report
