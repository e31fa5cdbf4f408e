"""Figure rendering for the command-line reports.

Each renderer takes the same rows that go into the delimited output and
writes one PNG next to it.  The non-interactive backend is selected before
pyplot is imported so rendering works without a display.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["figure_path", "render_sigma", "render_bound", "render_train",
           "render_sweep"]


def figure_path(out_path: str) -> Path:
    """PNG path next to the delimited output file."""
    return Path(out_path).with_suffix(".png")


def _curve_label(theta: float, epsilon: float) -> str:
    eps = "∞" if math.isinf(epsilon) else f"{epsilon:g}"
    return f"θ={theta:g}, ε={eps}"


def _group(rows, keys=("theta", "epsilon")):
    grouped: dict[tuple, list] = {}
    for row in rows:
        grouped.setdefault(tuple(row[k] for k in keys), []).append(row)
    return grouped


def render_sigma(rows, out_path: str) -> Path:
    """Per-round noise variance profiles, one curve per (theta, epsilon)."""
    target = figure_path(out_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (theta, epsilon), group in _group(rows).items():
        for row in group:
            variances = [float(v) for v in row["variances"].split(";")]
            rounds = range(1, len(variances) + 1)
            ax.plot(rounds, variances, marker=".",
                    label=_curve_label(theta, epsilon))
    if any(v > 0 for row in rows for v in
           (float(x) for x in row["variances"].split(";"))):
        ax.set_yscale("log")
    ax.set_xlabel("aggregation round m")
    ax.set_ylabel("noise variance")
    ax.set_title("calibrated noise schedule")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(target, dpi=120)
    plt.close(fig)
    return target


def render_bound(rows, out_path: str) -> Path:
    """Convergence bound against the round count, optima marked."""
    target = figure_path(out_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (theta, epsilon), group in _group(rows).items():
        group = sorted(group, key=lambda r: r["M"])
        ms = [row["M"] for row in group]
        values = [row["bound"] for row in group]
        line, = ax.plot(ms, values, marker=".",
                        label=_curve_label(theta, epsilon))
        best = [row for row in group if row["optimal"]]
        if best:
            ax.plot([best[0]["M"]], [best[0]["bound"]], marker="o",
                    markersize=9, fillstyle="none",
                    color=line.get_color())
    ax.set_xlabel("number of aggregations M")
    ax.set_ylabel("loss-gap bound")
    ax.set_yscale("log")
    ax.set_title("convergence bound (circles: optimal M)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(target, dpi=120)
    plt.close(fig)
    return target


def render_train(rows, out_path: str) -> Path:
    """Accuracy and loss traces of one run; adjustments marked."""
    target = figure_path(out_path)
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(10, 4.2))
    rounds = [row["m"] for row in rows]
    ax_acc.plot(rounds, [row["test_accuracy"] for row in rows],
                color="tab:blue")
    ax_acc.set_xlabel("aggregation round m")
    ax_acc.set_ylabel("test accuracy")
    ax_acc.set_ylim(0.0, 1.0)
    ax_loss.plot(rounds, [row["test_loss"] for row in rows],
                 color="tab:red", label="test loss")
    ax_loss.set_xlabel("aggregation round m")
    ax_loss.set_ylabel("loss")
    ax_loss.legend(fontsize=8)
    for row in rows:
        if row["adjusted"]:
            for ax in (ax_acc, ax_loss):
                ax.axvline(row["m"], color="gray", linestyle=":",
                           linewidth=1)
    fig.suptitle("training trace (dotted: schedule adjustment)")
    fig.tight_layout()
    fig.savefig(target, dpi=120)
    plt.close(fig)
    return target


def render_sweep(rows, out_path: str) -> Path:
    """Final accuracy against the round count, per (theta, epsilon)."""
    target = figure_path(out_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (theta, epsilon), group in _group(rows).items():
        group = sorted(group, key=lambda r: r["M"])
        ax.plot([row["M"] for row in group],
                [row["final_accuracy"] for row in group], marker="o",
                label=_curve_label(theta, epsilon))
    ax.set_xlabel("number of aggregations M")
    ax.set_ylabel("final test accuracy")
    ax.set_title("accuracy across round counts")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(target, dpi=120)
    plt.close(fig)
    return target
