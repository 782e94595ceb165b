"""Figure rendering for the report paths.

Every CLI report writes its delimited data first and then, unless plots
are disabled, renders a matching PNG next to it. The Agg backend keeps
rendering headless and byte-reproducible; figure metadata that would
break reproducibility is stripped on save.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

STYLE = {
    "figure.figsize": (9.0, 5.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "legend.fontsize": 9,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
}

_SAVE_KW = {"metadata": {"Software": None}, "bbox_inches": "tight"}


def _new_axes():
    plt.rcParams.update(STYLE)
    fig, ax = plt.subplots()
    return fig, ax


def save_outlier_overview(report, index, path, title=None):
    """Distance series with the cutoff line; dropped rows marked."""
    fig, ax = _new_axes()
    idx = np.asarray(index, dtype=float)
    kept, dropped = report.keep, ~report.keep
    ax.plot(idx[kept], report.distance[kept], ".", ms=2, color="tab:green", label="retained")
    if dropped.any():
        ax.plot(idx[dropped], report.distance[dropped], ".", ms=3, color="tab:blue",
                label="outlier")
    if np.isfinite(report.cutoff):
        ax.axhline(report.cutoff, color="tab:red", lw=1.2, label="cutoff")
    ax.set_xlabel("sample index")
    ax.set_ylabel(f"{report.method} distance")
    ax.set_title(title or f"{report.method}: {report.n_flagged()} of {len(report.keep)} flagged")
    ax.legend(loc="upper right")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_prediction_trace(reports, path, title=None):
    """Measured output vs raw sensor predictions over the test samples."""
    fig, ax = _new_axes()
    first = next(iter(reports.values()))
    ax.plot(first.trace_index, first.trace_measured, "ks", ms=4, mfc="none",
            label="lab analysis")
    for name, rep in reports.items():
        ax.plot(rep.trace_index, rep.trace_raw, lw=1.1, label=name)
    ax.set_xlabel("sample index")
    ax.set_ylabel("output")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", ncols=2)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_rmse_boxplot(summary, path, metric="rmse", title=None):
    """Per-method box plot over the benchmark repeats."""
    fig, ax = _new_axes()
    data, labels = [], []
    for m in summary.methods:
        vals = summary.values[m][metric]
        vals = vals[np.isfinite(vals)]
        if vals.size:
            data.append(vals)
            labels.append(m)
    ax.boxplot(data, tick_labels=labels, whis=1.5, flierprops={"marker": "+"})
    ax.set_ylabel(metric)
    ax.set_title(title or f"{metric} over {summary.repeats} splits")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
