"""PNG figures for sweep series, report tables and toy score grids."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

AXIS_LABELS = {
    "oe_size": "number of OE samples",
    "blur_sigma": "blur sigma of OE samples",
    "diversity_k": "number of OE classes k",
    "gamma": "focal gamma",
}


def _positions(xs) -> tuple[np.ndarray, list[str]]:
    return np.arange(len(xs)), [str(x) for x in xs]


def plot_series(series, path) -> None:
    """Mean AUC (%) per method against the sweep axis, shaded by one std."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    pos, ticks = _positions(series.x)
    for m in series.methods:
        mu, sd = np.asarray(series.mean[m]), np.asarray(series.std[m])
        ax.plot(pos, mu, marker="o", label=m)
        ax.fill_between(pos, mu - sd, mu + sd, alpha=0.2)
    ax.set_xticks(pos, ticks)
    ax.set_xlabel(AXIS_LABELS.get(series.axis, series.axis))
    ax.set_ylabel("mean AUC (%)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_table(table, path) -> None:
    """Grouped bars of per-class mean AUC; one panel per axis value (first four at most)."""
    xs = table.xs[:4]
    fig, axes = plt.subplots(len(xs), 1, figsize=(max(5.0, 0.6 * len(table.classes) + 3), 2.8 * len(xs)),
                             squeeze=False)
    for ax, x in zip(axes[:, 0], xs):
        methods = [m for m in table.methods if (x, m) in table.cells]
        width = 0.8 / max(len(methods), 1)
        labels = [str(c) for c in table.classes] + ["mean"]
        pos = np.arange(len(labels))
        for i, m in enumerate(methods):
            per = table.cells[(x, m)]
            vals = [100 * per[c].mean if c in per else np.nan for c in table.classes]
            errs = [100 * per[c].std if c in per else 0.0 for c in table.classes]
            g = table.grand(x, m)
            ax.bar(pos + i * width, vals + [100 * g.mean], width, yerr=errs + [100 * g.std], label=m, capsize=2)
        ax.set_xticks(pos + width * (len(methods) - 1) / 2, labels)
        ax.set_ylabel("AUC (%)")
        if table.axis != "none":
            ax.set_title(f"{table.axis} = {x}")
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_toy_grid(grid, extent: float, path, data=None, thresholds=None) -> None:
    """Score heat maps (BCE and HSC) per setting with the nominal sublevel contour."""
    settings = list(grid)
    fig, axes = plt.subplots(len(settings), 2, figsize=(8, 4 * len(settings)), squeeze=False)
    for row, name in enumerate(settings):
        for col, method in enumerate(("bce", "hsc")):
            ax = axes[row, col]
            s = grid[name][method]
            ax.imshow(s, origin="lower", extent=(-extent, extent, -extent, extent), cmap="viridis")
            if thresholds is not None:
                ax.contour(np.linspace(-extent, extent, s.shape[1]), np.linspace(-extent, extent, s.shape[0]),
                           s, levels=[thresholds[name][method]], colors="white", linewidths=1.5)
            if data is not None:
                nom, oe = data[name]
                ax.scatter(nom[:, 0], nom[:, 1], s=3, c="tab:blue")
                ax.scatter(oe[:, 0], oe[:, 1], s=3, c="tab:red")
            ax.set_title(f"{name}: {method}")
            ax.set_xlim(-extent, extent)
            ax.set_ylim(-extent, extent)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
