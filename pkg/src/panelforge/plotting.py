"""Figure rendering for training logs and evaluation reports.

Uses the non-interactive Agg backend; every function writes a PNG next to
the delimited output it illustrates.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def save_loss_curve(log, path: str | Path, title: str = "training loss") -> Path:
    """`log` is a harness LossLog (needs columns step/loss/smoothed)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7, 4))
    steps = log.column("step")
    ax.plot(steps, log.column("loss"), lw=0.6, alpha=0.4, label="loss")
    ax.plot(steps, log.column("smoothed"), lw=1.6, label="smoothed")
    for extra in ("lm", "mse", "diff"):
        if log.rows and extra in log.rows[0]:
            ax.plot(steps, log.column(extra), lw=0.8, alpha=0.7, label=extra)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def save_metric_bars(metrics: dict[str, float], path: str | Path, title: str = "evaluation metrics") -> Path:
    path = Path(path)
    names = [k for k, v in metrics.items() if v is not None]
    values = [metrics[k] for k in names]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(names)), 4))
    bars = ax.bar(names, values, color="#4878a8")
    for bar, v in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height(), f"{v:.3f}",
                ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("score")
    ax.set_title(title)
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
