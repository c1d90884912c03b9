"""Figures for benchmark curves: error and cost versus communication."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

LABELS = {"mm": "MM (proposed)", "bb": "BB + consensus"}
STYLES = {"mm": dict(color="k", ls="-"), "bb": dict(color="tab:red", ls="--")}


def figure_style():
    """rc overrides for small two-panel report figures."""
    return {
        "font.size": 9,
        "axes.labelsize": 9,
        "axes.titlesize": 9,
        "legend.fontsize": 8,
        "xtick.labelsize": 8,
        "ytick.labelsize": 8,
        "lines.linewidth": 1.2,
        "axes.grid": True,
        "grid.linestyle": ":",
        "grid.linewidth": 0.5,
        "savefig.dpi": 150,
        # keep PNG bytes stable across runs
        "svg.hashsalt": "mmnetloc",
    }


def plot_sigma_panels(curves: dict, sigma: float, path) -> None:
    """Mean MPE and mean cost per sensor against cumulative scalars sent.

    ``curves`` maps method name to an object with ``comm_scalars``,
    ``mean_mpe`` and ``mean_cost_per_sensor`` arrays.
    """
    with plt.rc_context(figure_style()):
        fig, (ax_err, ax_cost) = plt.subplots(1, 2, figsize=(8, 3.2))
        for method, curve in curves.items():
            kw = dict(label=LABELS.get(method, method), **STYLES.get(method, {}))
            ax_err.semilogx(curve.comm_scalars[1:], curve.mean_mpe[1:], **kw)
            ax_cost.loglog(curve.comm_scalars[1:], curve.mean_cost_per_sensor[1:], **kw)
        ax_err.set_xlabel("communicated scalars")
        ax_err.set_ylabel("mean positioning error per sensor")
        ax_cost.set_xlabel("communicated scalars")
        ax_cost.set_ylabel("mean cost per sensor")
        ax_err.legend(loc="best")
        fig.suptitle(f"sigma = {sigma:g}")
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
