"""Figure rendering for the report paths.

Every CLI report writes delimited records plus matplotlib figures rendered
straight to files (Agg backend; no display required).
"""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def _finish(fig, path):
    fig.tight_layout()
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def fig_trace(values, path, ylabel="log posterior", title=None):
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(np.asarray(values), lw=0.9)
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    _finish(fig, path)


def fig_bic_curve(table, path):
    """BIC against G, one line per geometry."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    geometries = sorted({row.geometry for row in table})
    markers = {"distance": "o", "projection": "s"}
    for geometry in geometries:
        rows = sorted((r for r in table if r.geometry == geometry),
                      key=lambda r: r.G)
        ax.plot([r.G for r in rows], [r.bic for r in rows],
                marker=markers.get(geometry, "o"), label=geometry)
    ax.set_xlabel("number of communities G")
    ax.set_ylabel("BIC (higher is better)")
    ax.legend()
    _finish(fig, path)


def fig_heatmap(matrix, path, title=None, vmin=0.0, vmax=1.0):
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    im = ax.imshow(np.asarray(matrix), vmin=vmin, vmax=vmax, cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_xlabel("actor")
    ax.set_ylabel("actor")
    if title:
        ax.set_title(title)
    _finish(fig, path)


def fig_metric_series(series, path, ylabel="value"):
    """Per-time metric curves; `series` maps names to value lists."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for name, values in series.items():
        ax.plot(np.arange(1, len(values) + 1), values, marker="o", label=name)
    ax.set_xlabel("time")
    ax.set_ylabel(ylabel)
    ax.legend()
    _finish(fig, path)


def fig_runtime(rows, path):
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ns = [r["n"] for r in rows]
    ax.plot(ns, [r["seconds_mcmc"] for r in rows], marker="s", ls="--",
            label="Gibbs sampler")
    ax.plot(ns, [r["seconds_vb"] for r in rows], marker="o", label="VB")
    ax.set_xlabel("actors n")
    ax.set_ylabel("seconds")
    ax.legend()
    _finish(fig, path)
