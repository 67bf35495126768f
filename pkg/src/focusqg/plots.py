"""Matplotlib figures for training logs, ablation tables and metric reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def training_curve(log_rows, path, title="training"):
    """Train loss and dev perplexity per epoch (one line per ``model_name`` if present)."""
    fig, (ax_loss, ax_ppl) = plt.subplots(1, 2, figsize=(9, 3.5))
    groups = {}
    for row in log_rows:
        if "dev_ppl" not in row:
            continue
        key = (row.get("model_name", ""), row.get("step", 0))
        groups.setdefault(key, []).append(row)
    for (name, step), rows in groups.items():
        label = name + (f" (pretrain {step})" if step else "")
        epochs = [r["epoch"] for r in rows]
        ax_loss.plot(epochs, [r["train_loss"] for r in rows], label=label or None)
        ax_ppl.plot(epochs, [r["dev_ppl"] for r in rows], label=label or None)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss")
    ax_ppl.set_xlabel("epoch")
    ax_ppl.set_ylabel("dev perplexity")
    ax_ppl.set_yscale("log")
    if any(name for name, _ in groups):
        ax_ppl.legend(fontsize=7)
    fig.suptitle(title)
    return _save(fig, path)


def ablation_bars(rows, path):
    """Grouped bars of BLEU-4, METEOR and ROUGE-L per ablation rung."""
    names = [r["model_name"] for r in rows]
    metrics = ("bleu4", "meteor", "rougeL")
    width = 0.8 / len(metrics)
    fig, ax = plt.subplots(figsize=(max(6, 0.9 * len(names)), 3.5))
    for k, m in enumerate(metrics):
        xs = [i + (k - 1) * width for i in range(len(names))]
        ax.bar(xs, [r[m] for r in rows], width, label=m)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("score (%)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def metric_histogram(report, path):
    """Distribution of per-hypothesis sentence BLEU, ROUGE-L and METEOR."""
    diags = report.diagnostics
    fig, axes = plt.subplots(1, 3, figsize=(9, 3))
    for ax, m in zip(axes, ("bleu4", "rougeL", "meteor")):
        ax.hist([d[m] for d in diags], bins=20, range=(0, 100))
        ax.set_xlabel(m)
    axes[0].set_ylabel("hypotheses")
    fig.suptitle(f"{report.setup}: {report.n_hypotheses} hypotheses")
    return _save(fig, path)
