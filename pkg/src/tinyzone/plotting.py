"""Report figures written next to the JSON output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 9,
    "lines.linewidth": 1.5,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _figure(width=5.0, height=3.4):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height), layout="constrained")
    return fig, ax


def _save(fig, path):
    with plt.rc_context(STYLE):
        fig.savefig(path)
    plt.close(fig)


def plot_invoke_times(path, secure_mb, remap_ms, mapped_ms):
    """Invoke time against secure memory size, with and without per-invoke remapping."""
    fig, ax = _figure()
    ax.plot(secure_mb, remap_ms, "o-", label="remap each invoke")
    ax.plot(secure_mb, mapped_ms, "s--", label="map once per session")
    ax.set_xlabel("secure memory (MB)")
    ax.set_ylabel("time per invoke (ms)")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_power_law(path, points, fit, optimal_units=None):
    """Sweep points on log-log axes with the fitted curve and the chosen size."""
    x = np.array([p.shm_units for p in points], dtype=float)
    y = np.array([p.delay_s for p in points], dtype=float)
    grid = np.geomspace(x.min(), x.max(), 200)
    fig, ax = _figure()
    ax.loglog(x, y, "o", label="measured")
    ax.loglog(grid, fit.alpha * grid ** fit.beta, "-",
              label=f"y = {fit.alpha:.4g} x^{fit.beta:.3g}  (r² = {fit.r_squared:.4f})")
    if optimal_units is not None:
        ax.axvline(optimal_units, color="0.4", lw=1, ls=":")
        ax.annotate(f"{optimal_units} units", (optimal_units, fit.predict(optimal_units)),
                    xytext=(6, 6), textcoords="offset points")
    ax.set_xlabel("shared memory (4 KB units)")
    ax.set_ylabel("weight transfer delay (s)")
    ax.legend(frameon=False)
    _save(fig, path)
