"""Figures rendered next to run and compare outputs. Agg backend only."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STAGE_LABELS = {"s1": "S1", "s2": "S2", "ef": "EF", "lf": "LF"}
# fraction-valued table columns; HD is a count and gets its own axis
FRACTION_COLUMNS = ("F1Micro", "MR", "GA", "Y/N A", "LC A")

_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}


def _grouped_bars(ax, groups: list[str], series: dict[str, list[float]]):
    k = max(len(series), 1)
    width = 0.8 / k
    x = np.arange(len(groups))
    for i, (label, values) in enumerate(series.items()):
        vals = [np.nan if v is None else v for v in values]
        ax.bar(x + (i - (k - 1) / 2) * width, vals, width, label=label)
    ax.set_xticks(x)
    ax.set_xticklabels(groups, rotation=60, ha="right", fontsize=7)
    ax.legend(fontsize=8)


def plot_per_class(per_class: dict[str, dict[str, float]], class_names, path, metric: str = "F1"):
    """``per_class[series][class] -> score``; one bar group per class."""
    fig, ax = plt.subplots(figsize=(max(6.0, 0.25 * len(class_names) * max(len(per_class), 1)), 4.0))
    _grouped_bars(ax, list(class_names), {k: [v[c] for c in class_names] for k, v in per_class.items()})
    ax.set_ylabel(metric)
    ax.set_ylim(0, 1)
    fig.savefig(Path(path), bbox_inches="tight", **_SAVE_KW)
    plt.close(fig)


def plot_table(rows: dict[str, dict], path):
    """Bar chart of the summary table; Hamming distance on a separate panel."""
    fig, (ax, ax_hd) = plt.subplots(1, 2, figsize=(9.0, 3.6), gridspec_kw={"width_ratios": [5, 1]})
    _grouped_bars(ax, list(FRACTION_COLUMNS), {k: [r[c] for c in FRACTION_COLUMNS] for k, r in rows.items()})
    ax.set_ylim(0, 1)
    ax.set_ylabel("score")
    names = list(rows)
    ax_hd.bar(np.arange(len(names)), [rows[n]["HD"] for n in names], color="0.5")
    ax_hd.set_xticks(np.arange(len(names)))
    ax_hd.set_xticklabels(names, fontsize=7)
    ax_hd.set_title("HD", fontsize=9)
    fig.tight_layout()
    fig.savefig(Path(path), **_SAVE_KW)
    plt.close(fig)


def plot_run(report: dict, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    stages = {STAGE_LABELS[k]: v for k, v in report["stages"].items() if v is not None}
    per_class = {k: {c: s["f1"] for c, s in v["metrics"]["per_class"].items()} for k, v in stages.items()}
    paths = [out_dir / "per_class_f1.png", out_dir / "summary_table.png"]
    plot_per_class(per_class, report["nomenclature"], paths[0])
    plot_table({k: v["table"] for k, v in stages.items()}, paths[1])
    return paths


def plot_compare(comparison: dict, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    labels = comparison["labels"]
    per_class = {lab: {row["class"]: row["f1"][i] for row in comparison["per_class"]} for i, lab in enumerate(labels)}
    names = [row["class"] for row in comparison["per_class"]]
    paths = [out_dir / "compare_per_class_f1.png", out_dir / "compare_table.png"]
    plot_per_class(per_class, names, paths[0])
    plot_table({lab: comparison["tables"][i] for i, lab in enumerate(labels)}, paths[1])
    return paths
