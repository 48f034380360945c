"""Figure rendering for the report path; everything goes straight to PNG files.

The CSVs stay the canonical outputs; these plots are companions rendered next
to them (learning curves per combo, evaluation summaries, the world scatter
for dumped episodes, and the cross-combo comparison used by `report`).
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .config import COMBO_LABELS

_CURVE_PANELS = [
    ("sum_reward", "episode reward"),
    ("mean_distance_reward", "distance component"),
    ("mean_trip_reward", "trip-share component"),
    ("mean_utilization_reward", "utilization component"),
    ("trips", "trips"),
    ("served_per_trip", "served per trip"),
]

_STATE_COLORS = {"served": "tab:green", "dropped": "tab:red", "open": "tab:orange",
                 "assigned": "tab:blue"}


def _by_seed(rows: list[dict]) -> dict[int, list[dict]]:
    grouped: dict[int, list[dict]] = {}
    for row in rows:
        grouped.setdefault(int(row["seed"]), []).append(row)
    for bucket in grouped.values():
        bucket.sort(key=lambda r: r["episode"])
    return grouped


def learning_curves(rows: list[dict], combo: str, path: str) -> str:
    """Six-panel training curves; one faint line per seed plus the seed mean."""
    grouped = _by_seed(rows)
    fig, axes = plt.subplots(2, 3, figsize=(13, 7))
    for ax, (column, label) in zip(axes.flat, _CURVE_PANELS):
        stacks = []
        for seed, bucket in sorted(grouped.items()):
            xs = [r["episode"] for r in bucket]
            ys = [r[column] for r in bucket]
            ax.plot(xs, ys, alpha=0.35, linewidth=0.9, label=f"seed {seed}")
            stacks.append(ys)
        if stacks and len({len(s) for s in stacks}) == 1:
            mean = np.mean(np.array(stacks), axis=0)
            ax.plot(xs, mean, color="black", linewidth=1.6, label="mean")
        ax.set_xlabel("episode")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    axes.flat[0].legend(fontsize=7)
    fig.suptitle(f"training curves: {COMBO_LABELS.get(combo, combo)}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def eval_summary(rows: list[dict], combo: str, path: str) -> str:
    """Per-seed evaluation means for the headline metrics."""
    grouped = _by_seed(rows)
    columns = ["trips", "served", "dropped", "mean_utilization", "sum_reward"]
    fig, axes = plt.subplots(1, len(columns), figsize=(3 * len(columns), 3.2))
    seeds = sorted(grouped)
    for ax, column in zip(axes, columns):
        means = [float(np.mean([r[column] for r in grouped[s]])) for s in seeds]
        ax.bar([str(s) for s in seeds], means, color="tab:blue")
        ax.set_title(column, fontsize=9)
        ax.set_xlabel("seed")
        ax.grid(alpha=0.3, axis="y")
    fig.suptitle(f"evaluation: {COMBO_LABELS.get(combo, combo)}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def gae_history(history: list[float], holdout_auc: float, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(history)), history)
    ax.set_xlabel("epoch")
    ax.set_ylabel("reconstruction loss")
    ax.set_title(f"graph encoder training (held-out AUC {holdout_auc:.3f})")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def world_scatter(order_rows: list[dict], depots: list[tuple[float, float]], path: str) -> str:
    """Final order map of a dumped episode, colored by terminal state."""
    fig, ax = plt.subplots(figsize=(6, 6))
    for state, color in _STATE_COLORS.items():
        xs = [r["x"] for r in order_rows if r["state"] == state]
        ys = [r["y"] for r in order_rows if r["state"] == state]
        if xs:
            ax.scatter(xs, ys, s=14, color=color, label=f"{state} ({len(xs)})", alpha=0.75)
    dx = [p[0] for p in depots]
    dy = [p[1] for p in depots]
    ax.scatter(dx, dy, marker="s", s=90, color="black", label="warehouse")
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_aspect("equal")
    ax.legend(fontsize=8, loc="upper right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def combo_comparison(eval_rows: dict[str, list[dict]], path: str) -> str:
    """Side-by-side evaluation means for every combo that has an eval CSV."""
    combos = sorted(eval_rows)
    columns = ["trips", "served", "mean_utilization", "sum_reward"]
    fig, axes = plt.subplots(1, len(columns), figsize=(3.4 * len(columns), 3.4))
    for ax, column in zip(axes, columns):
        values = [float(np.mean([r[column] for r in eval_rows[c]])) for c in combos]
        ax.bar(combos, values, color="tab:purple")
        ax.set_title(column, fontsize=9)
        ax.grid(alpha=0.3, axis="y")
    fig.suptitle("evaluation means by combo")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
