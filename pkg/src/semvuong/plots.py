"""Figure rendering for simulation summaries.

Renders the two standard views of a study run to PNG files: rejection
rates as power curves over the effect-size grid (one panel per sample
size), and interval quality (mean width and coverage) per condition.
Uses the Agg backend so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["plot_power_curves", "plot_interval_summary"]

_STYLE = {"linewidth": 1.4, "marker": "o", "markersize": 3.5}


def _condition_label(condition: dict) -> str:
    return ", ".join(f"{k}={v}" for k, v in condition.items())


def plot_power_curves(summaries, path, *, alpha: float = 0.05):
    """Rejection rate against effect size, one panel per sample size.

    Expects summaries with ``condition`` keys ``n`` and ``d`` and
    non-empty ``reject_rates``.  Returns the output path.
    """
    rows = [s for s in summaries if s.reject_rates]
    if not rows:
        raise ValueError("no summaries with rejection rates to plot")
    n_levels = sorted({s.condition["n"] for s in rows})
    stat_names = list(rows[0].reject_rates)
    fig, axes = plt.subplots(1, len(n_levels), figsize=(3.2 * len(n_levels), 3.0),
                             sharey=True, squeeze=False)
    for ax, n in zip(axes[0], n_levels):
        panel = sorted((s for s in rows if s.condition["n"] == n),
                       key=lambda s: s.condition["d"])
        ds = [s.condition["d"] for s in panel]
        for name in stat_names:
            ax.plot(ds, [s.reject_rates[name] for s in panel],
                    label=name, **_STYLE)
        ax.axhline(alpha, color="gray", linestyle=":", linewidth=0.8)
        ax.set_title(f"n = {n}")
        ax.set_xlabel("d")
        ax.set_ylim(-0.02, 1.02)
    axes[0][0].set_ylabel("proportion preferring A")
    axes[0][-1].legend(fontsize="x-small", loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_interval_summary(summaries, path, *, nominal: float = 0.90):
    """Mean interval width and coverage per condition.

    Plots the analytic interval and, where present, the bootstrap
    interval side by side; the coverage panel marks the nominal level.
    Returns the output path.
    """
    rows = [s for s in summaries if s.mean_width]
    if not rows:
        raise ValueError("no summaries with interval statistics to plot")
    labels = [_condition_label(s.condition) for s in rows]
    xs = range(len(rows))
    fig, (ax_w, ax_c) = plt.subplots(2, 1, figsize=(max(4.0, 0.6 * len(rows)), 5.4),
                                     sharex=True)
    for kind in ("vuong", "boot"):
        if any(kind in s.mean_width for s in rows):
            ax_w.plot(xs, [s.mean_width.get(kind) for s in rows],
                      label=kind, **_STYLE)
            ax_c.plot(xs, [s.coverage.get(kind) for s in rows],
                      label=kind, **_STYLE)
    ax_w.set_ylabel("mean width")
    ax_c.set_ylabel("coverage")
    ax_c.axhline(nominal, color="gray", linestyle=":", linewidth=0.8)
    ax_c.set_ylim(0.0, 1.05)
    ax_c.set_xticks(list(xs))
    ax_c.set_xticklabels(labels, rotation=45, ha="right", fontsize="x-small")
    ax_w.legend(fontsize="x-small")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
