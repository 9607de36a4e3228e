"""Report figures. Rendered off-screen with the Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "legend.frameon": False,
}


def ndcg_histogram(report, path, title: str | None = None) -> None:
    """Per-ego-net NDCG distribution with the mean and its bootstrap interval."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        vals = np.asarray(report.per_egonet)
        ax.hist(vals, bins=np.linspace(0.0, 1.0, 21), color="#4c72b0", alpha=0.8)
        ax.axvline(report.mean, color="#c44e52", lw=1.5, label=f"mean {report.mean:.4f}")
        ax.axvspan(report.ci_low, report.ci_high, color="#c44e52", alpha=0.15, label="95% CI")
        ax.set_xlabel(report.metric)
        ax.set_ylabel("ego-nets")
        ax.set_title(title or f"{report.metric} over {report.n_egonets} ego-nets")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def learning_curve(history, path) -> None:
    """Training loss and validation NDCG per epoch."""
    epochs = [s.epoch for s in history.epochs]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(epochs, [s.train_loss for s in history.epochs], marker="o", color="#4c72b0", label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("pairwise loss")
        valid = [s.valid_ndcg for s in history.epochs]
        if any(v is not None for v in valid):
            ax2 = ax.twinx()
            ax2.plot(epochs, valid, marker="s", color="#55a868", label="valid ndcg@5")
            ax2.set_ylabel("validation ndcg@5")
            ax2.grid(False)
            lines = ax.get_lines() + ax2.get_lines()
            ax.legend(lines, [ln.get_label() for ln in lines], loc="center right")
        else:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def suggestion_scores(suggestions, path) -> None:
    """Score distribution of the emitted suggestions, one series per rank."""
    by_rank: dict[int, list[float]] = {}
    for lst in suggestions.values():
        for rank, (_, s) in enumerate(lst, 1):
            by_rank.setdefault(rank, []).append(s)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ranks = sorted(by_rank)
        if ranks:
            ax.boxplot([by_rank[r] for r in ranks], positions=ranks, widths=0.6, showfliers=False)
        ax.set_xlabel("rank")
        ax.set_ylabel("aggregated score")
        ax.set_title(f"suggestions for {len(suggestions)} users")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
