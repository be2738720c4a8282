#!/usr/bin/env python3
"""Sweep the adapted-feature blend weight and report the metric trend.

Runs the evaluation suite at several blend values against one checkpoint
and writes a CSV plus a line chart. The interesting qualitative trend:
raising the blend trades identity similarity for caption alignment.

Usage:
    python3 scripts/beta_sweep.py --ckpt run2/checkpoint_final.pfckpt \
        --data corpus --out sweeps/beta --betas 0 0.2 0.4 0.6 0.8 1.0
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from panelforge.data.annotations import load_corpus  # noqa: E402
from panelforge.evaluation import (  # noqa: E402
    EvalOracles,
    FixedSeedAlignmentScorer,
    FixedSeedEmbedder,
    TruthDialogDetector,
    run_eval,
)
from panelforge.models.generator import build_model  # noqa: E402
from panelforge.training.checkpoint import CheckpointArchive  # noqa: E402
from panelforge.training.config import train_config_from_flat  # noqa: E402


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--ckpt", required=True)
    parser.add_argument("--data", required=True)
    parser.add_argument("--out", required=True, help="Output directory.")
    parser.add_argument("--betas", type=float, nargs="+", default=[0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    archive = CheckpointArchive.load(args.ckpt)
    model = build_model(train_config_from_flat(archive.config).effective_model())
    archive.apply_to_model(model)
    model.eval()
    corpus = load_corpus(args.data)
    oracles = EvalOracles(
        embedder=FixedSeedEmbedder(),
        text_scorer=FixedSeedAlignmentScorer(vocab_size=model.config.vocab_size),
        dialog_detector=TruthDialogDetector(),
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for beta in args.betas:
        report = run_eval(model, corpus, oracles, steps=args.steps, seed=args.seed, beta=beta)
        row = {"beta": beta, **{k: v for k, v in report.metrics.items()}}
        rows.append(row)
        print(f"beta={beta:.2f}  " + "  ".join(
            f"{k}={v:.4f}" if v is not None else f"{k}=n/a" for k, v in report.metrics.items()
        ))

    metric_names = [k for k in rows[0] if k != "beta"]
    with open(out / "beta_sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["beta", *metric_names])
        writer.writeheader()
        writer.writerows(rows)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in metric_names:
        values = [row[name] for row in rows]
        if any(v is None for v in values):
            continue
        ax.plot([row["beta"] for row in rows], values, marker="o", label=name)
    ax.set_xlabel("adapted-feature blend weight")
    ax.set_ylabel("score")
    ax.set_title("blend weight sweep")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "beta_sweep.png", dpi=110)
    print(f"wrote {out / 'beta_sweep.csv'} and {out / 'beta_sweep.png'}")


if __name__ == "__main__":
    main()
