"""SVG figures for experiment reports.

Rendering is headless and byte-deterministic: the Agg backend, a fixed
hash salt (the config digest) for generated element ids, and a stripped
Date field.  Figures are deliberately plain; they accompany the CSV, they
do not replace it.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_svg", "decay_figure", "power_figure", "histogram_figure",
    "curve_figure",
]

_STYLE = {
    "figure.figsize": (5.2, 3.6),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


def save_svg(fig, path, salt):
    """Write fig as SVG with deterministic ids and no timestamp."""
    with plt.rc_context({"svg.hashsalt": str(salt)}):
        fig.savefig(str(path), format="svg", metadata={"Date": None},
                    bbox_inches="tight")
    plt.close(fig)
    return str(path)


def decay_figure(times, values, bound=None, stderr=None,
                 ylabel="mean pair distance", bound_label="theory bound"):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        values = np.asarray(values, dtype=float)
        ax.semilogy(times, np.maximum(values, 1e-12), "o-", color="C0",
                    label="estimate")
        if stderr is not None:
            lo = np.maximum(values - 2 * np.asarray(stderr), 1e-12)
            hi = values + 2 * np.asarray(stderr)
            ax.fill_between(times, lo, hi, color="C0", alpha=0.2,
                            linewidth=0)
        if bound is not None:
            ax.semilogy(times, bound, "k--", label=bound_label)
        ax.set_xlabel("time")
        ax.set_ylabel(ylabel)
        ax.legend()
    return fig


def power_figure(xs, ys, fit=None, stderr=None, xlabel="N", ylabel="error",
                 ref_slope=None):
    """Log-log scatter with optional fitted line and reference slope."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.loglog(xs, ys, "o", color="C0", label="estimate")
        if stderr is not None:
            ax.errorbar(xs, ys, yerr=2 * np.asarray(stderr), fmt="none",
                        ecolor="C0", alpha=0.5)
        xs = np.asarray(xs, dtype=float)
        if fit is not None:
            line = np.exp(fit.intercept) * xs ** fit.slope
            ax.loglog(xs, line, "-", color="C1",
                      label=f"fit slope {fit.slope:.3f}")
        if ref_slope is not None:
            anchor = ys[0] * (xs / xs[0]) ** ref_slope
            ax.loglog(xs, anchor, "k--",
                      label=f"reference slope {ref_slope:.3f}")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
    return fig


def histogram_figure(sample, density=None, bins=64, data_range=None,
                     xlabel="x"):
    """Normalized histogram with an optional exact density overlay."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        sample = np.asarray(sample, dtype=float).ravel()
        ax.hist(sample, bins=bins, range=data_range, density=True,
                color="C0", alpha=0.6, label="simulated")
        if density is not None:
            lo, hi = (sample.min(), sample.max()) if data_range is None \
                else data_range
            grid = np.linspace(lo, hi, 400)
            ax.plot(grid, density(grid), "k-", label="exact")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("density")
        ax.legend()
    return fig


def curve_figure(x, curves, xlabel="r", ylabel="value", logy=False):
    """Plain line plot of named curves over a common grid."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        plot = ax.semilogy if logy else ax.plot
        for label, y in curves.items():
            plot(x, y, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
    return fig
