"""Figures for the ``report`` subcommand, drawn from tidy ``(x, y, series)`` tables."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "axes.linewidth": 0.6,
    "font.size": 9,
    "legend.frameon": False,
    "savefig.bbox": "tight",
}

# axis scales and labels per plot table
LAYOUT = {
    "bn": ("log", "log", "n", "b_n"),
    "maxima": ("log", "linear", "normalized maximum", "CDF"),
    "rn": ("log", "linear", "n", "r_n"),
    "kac": ("linear", "log", "k", "mass"),
    "acceptance": ("linear", "linear", "criterion", "checks passed (fraction)"),
}


def plot_table(rows, name, path):
    """Draw one line per series and save to ``path``.

    ``rows`` is a list of ``(x, y, series)`` tuples.  PNG metadata is
    fixed so identical tables give identical files.
    """
    xscale, yscale, xlabel, ylabel = LAYOUT.get(name, ("linear", "linear", "x", "y"))
    series = {}
    for x, y, s in rows:
        series.setdefault(s, ([], []))
        series[s][0].append(x)
        series[s][1].append(y)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for label in sorted(series):
            xs, ys = series[label]
            style = "o-" if len(xs) < 40 else "-"
            ax.plot(xs, ys, style, ms=3, lw=1, label=label)
        ax.set_xscale(xscale)
        ax.set_yscale(yscale)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend(fontsize=7)
        fig.savefig(path, format="png", metadata={"Software": None})
        plt.close(fig)
    return path
