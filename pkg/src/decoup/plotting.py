"""Plot data files and matplotlib figures for ratio and slope experiments.

A series is a label with ``(x, y)`` points, usually ``(log2 R, log2 ratio)``
for one exponent p.  Fitted lines, when given, are drawn dashed.
"""

from __future__ import annotations

import csv
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["series_from_rows", "write_plot_data", "render_figure"]

PLOT_SCHEMA = "decoup-plot v1"


def series_from_rows(rows, key=lambda r: f"p={r.p:g}") -> dict[str, list[tuple[float, float]]]:
    """Group ratio rows into ``label -> sorted [(log2 R, log2 ratio)]``."""
    import math

    out: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        if not (r.ratio > 0 and math.isfinite(r.ratio)):
            continue
        out.setdefault(key(r), []).append((math.log2(r.R), math.log2(r.ratio)))
    return {k: sorted(v) for k, v in sorted(out.items())}


def write_plot_data(path, series: Mapping[str, Sequence[tuple[float, float]]], kind: str) -> None:
    """Long-format ``series,x,y`` CSV usable by any plotting tool."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# {PLOT_SCHEMA} {kind}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "x", "y"])
        for label, pts in series.items():
            for x, y in pts:
                w.writerow([label, f"{x:.17g}", f"{y:.17g}"])


def render_figure(
    path,
    series: Mapping[str, Sequence[tuple[float, float]]],
    fits: Mapping[str, tuple[float, float]] | None = None,
    title: str = "",
    xlabel: str = r"$\log_2 R$",
    ylabel: str = r"$\log_2$ ratio",
) -> None:
    """Scatter every series; ``fits`` maps a label to ``(slope, intercept)``."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0), constrained_layout=True)
    for i, (label, pts) in enumerate(series.items()):
        color = f"C{i % 10}"
        xs = [x for x, _ in pts]
        ys = [y for _, y in pts]
        ax.plot(xs, ys, "o", color=color, label=label, ms=4)
        if fits and label in fits and xs:
            slope, icpt = fits[label]
            lo, hi = min(xs), max(xs)
            ax.plot([lo, hi], [slope * lo + icpt, slope * hi + icpt], "--", color=color, lw=1,
                    label=f"{label} fit, slope {slope:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.savefig(path, dpi=120)
    plt.close(fig)
