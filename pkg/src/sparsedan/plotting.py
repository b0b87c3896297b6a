"""PNG figures for the ``report`` and ``sweep`` CSV tables.

The CSV stays the authoritative output; these plots are a convenience view
of the same rows and are written next to it on request.
"""

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_table(rows, path):
    """Accuracy bars per method, annotated with the headline KiB."""
    names = [r[0] for r in rows]
    acc = [100.0 * r[-1] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    bars = ax.bar(names, acc, color="#4c72b0")
    for bar, row in zip(bars, rows):
        ax.annotate(f"{row[4]} KiB", (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize=8)
    ax.set_ylim(min(acc) - 5, 100)
    ax.set_ylabel("test accuracy (%)")
    return _save(fig, path)


def plot_sweep(rows, header, param, path):
    """Accuracy and per-layer sigma against the swept value, one line per variant."""
    sigma_cols = [i for i, h in enumerate(header) if h.startswith("sigma_l")]
    series = defaultdict(list)
    for row in rows:
        series[row[2]].append(row)
    fig, (ax_acc, ax_sig) = plt.subplots(1, 2, figsize=(10, 3.8))
    for variant, items in series.items():
        items = sorted(items, key=lambda r: r[1])
        x = [r[1] for r in items]
        ax_acc.plot(x, [100.0 * r[-1] for r in items], marker="o", label=variant)
        for col in sigma_cols:
            ax_sig.plot(x, [100.0 * r[col] for r in items], marker=".",
                        label=f"{variant} {header[col][6:]}")
    for ax in (ax_acc, ax_sig):
        ax.set_xlabel(param)
        if param == "lambda":
            ax.set_xscale("symlog", linthresh=1e-9)
        ax.legend(fontsize=7)
    ax_acc.set_ylabel("test accuracy (%)")
    ax_sig.set_ylabel("reserved weights (%)")
    return _save(fig, path)
