"""Static SVG figures for excess reports and index tracking."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .excess import AdjustedReport, ExcessReport, IndexTracking  # noqa: E402


def _x(weeks):
    return np.arange(len(weeks)), [wk.label for wk in weeks]


def _ticks(ax, labels):
    step = max(1, len(labels) // 10)
    ax.set_xticks(range(0, len(labels), step))
    ax.set_xticklabels(labels[::step], rotation=45, ha="right", fontsize=7)


def plot_group(report: ExcessReport | AdjustedReport, group: str, path) -> None:
    """Observed deaths as dots, forecast median line, shaded 75% and 95% bands.

    Weeks flagged significant are drawn as larger red markers.
    """
    r = report.report if isinstance(report, AdjustedReport) else report
    g = r.group_index(group)
    x, labels = _x(r.weeks)
    fig, ax = plt.subplots(figsize=(8, 4))
    for level, shade in ((0.95, "0.85"), (0.75, "0.65")):
        lo, hi = 0.5 - level / 2, 0.5 + level / 2
        if r.has_level(lo) and r.has_level(hi):
            ax.fill_between(x, r.quantile(lo)[:, g], r.quantile(hi)[:, g], color=shade,
                            label=f"{level:.0%} PI")
    ax.plot(x, r.expected_median[:, g], color="k", lw=1.2, label="forecast median")
    flagged = (report.significant_high | report.significant_low)[:, g]
    ax.scatter(x[~flagged], r.observed[~flagged, g], s=12, color="tab:blue", zorder=3, label="observed")
    if flagged.any():
        ax.scatter(x[flagged], r.observed[flagged, g], s=30, color="tab:red", zorder=4,
                   label="significant")
    ax.set_title(f"Weekly deaths: {group}")
    ax.set_ylabel("deaths")
    _ticks(ax, labels)
    ax.legend(fontsize=7, loc="upper left")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_tracking(tracking: IndexTracking, path) -> None:
    """Observed index against its forecast median and band."""
    x, labels = _x(tracking.weeks)
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.fill_between(x, tracking.lower, tracking.upper, color="0.85",
                    label=f"{tracking.level:.0%} PI")
    ax.plot(x, tracking.median, color="k", lw=1.2, label="forecast median")
    below = tracking.below_lower
    ax.scatter(x[~below], tracking.observed_index[~below], s=12, color="tab:blue", zorder=3,
               label="observed index")
    if below.any():
        ax.scatter(x[below], tracking.observed_index[below], s=30, color="tab:red", zorder=4,
                   label="below lower bound")
    ax.set_title("Mortality index (component 1)")
    _ticks(ax, labels)
    ax.legend(fontsize=7, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
