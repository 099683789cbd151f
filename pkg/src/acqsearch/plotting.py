"""Regret figures rendered next to the CSV output."""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_summary(summary, path, title: str | None = None) -> None:
    """Mean normalized regret with a band of one half standard deviation per AF.

    `summary` holds rows ``(experiment, af, trial, mean, half_std, n)`` as
    produced by :func:`acqsearch.engine.summarize`; one panel per experiment.
    """
    series = defaultdict(lambda: defaultdict(list))
    for experiment, af, t, mean, half_std, _ in summary:
        series[experiment][af].append((t, mean, half_std))
    if not series:
        raise ValueError("nothing to plot")
    experiments = sorted(series)
    fig, axes = plt.subplots(1, len(experiments), figsize=(5 * len(experiments), 3.6),
                             squeeze=False)
    for ax, experiment in zip(axes[0], experiments):
        for af in sorted(series[experiment]):
            t, m, h = (np.array(c) for c in zip(*sorted(series[experiment][af])))
            (line,) = ax.plot(t, m, label=af)
            ax.fill_between(t, m - h, m + h, color=line.get_color(), alpha=0.2)
        ax.axhline(0.0, color="red", lw=0.8)
        ax.set_xlabel("trial")
        ax.set_ylabel("normalized regret")
        ax.set_title(experiment)
        ax.legend(fontsize="small")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
