"""Matplotlib rendering of experiment outputs.

Every CSV an experiment writes gets a PNG sibling: surfaces as 3-d plots
over the contamination grid, curves as lines with a standard-error band.
Rendering is file-only (Agg backend); the CSVs remain the data contract.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_surface(path, x0, y0, values, title=""):
    """3-d surface of values over the (x0, y0) contamination grid."""
    x0 = np.asarray(x0)
    y0 = np.asarray(y0)
    values = np.asarray(values, dtype=float)
    n = int(round(np.sqrt(x0.size)))
    fig = plt.figure(figsize=(6, 4.5))
    ax = fig.add_subplot(projection="3d")
    if n * n == x0.size:
        shape = (n, n)
        ax.plot_surface(x0.reshape(shape), y0.reshape(shape),
                        values.reshape(shape), cmap="viridis",
                        linewidth=0, antialiased=True)
    else:
        ax.plot_trisurf(x0, y0, values, cmap="viridis", linewidth=0)
    ax.set_xlabel("x0")
    ax.set_ylabel("y0")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_curve(path, param, value, stderr=None, xlabel="", ylabel="", title=""):
    """Line plot with an optional +-2 stderr band."""
    param = np.asarray(param, dtype=float)
    value = np.asarray(value, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(param, value, marker="o", ms=3)
    if stderr is not None:
        stderr = np.asarray(stderr, dtype=float)
        ax.fill_between(param, value - 2 * stderr, value + 2 * stderr, alpha=0.25)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_curve_family(path, curves, xlabel="", ylabel="", title=""):
    """Overlay of several named curves: {name: (param, value)}."""
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    for name, (param, value) in curves.items():
        ax.plot(np.asarray(param, dtype=float), np.asarray(value, dtype=float),
                label=name, lw=1.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
