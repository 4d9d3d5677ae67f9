"""Figures written next to CLI outputs (PNG via the Agg canvas)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return path


def plot_scan(result, path, title: str | None = None) -> Path:
    """Rotation number with its error band and Lyapunov exponent against E."""
    fig = Figure(figsize=(7, 5), layout="constrained")
    ax1, ax2 = fig.subplots(2, 1, sharex=True)
    E, rot, err = np.asarray(result.E), np.asarray(result.rot), np.asarray(result.rot_err)
    ax1.plot(E, rot, lw=1)
    ax1.fill_between(E, rot - err, rot + err, alpha=0.3, lw=0)
    ax1.set_ylabel("rotation number (turns)")
    ax2.plot(E, result.lyap, lw=1, color="C3")
    ax2.set_ylabel("Lyapunov exponent")
    ax2.set_xlabel("E")
    if title:
        ax1.set_title(title)
    return _save(fig, path)


def plot_poincare(theta, Phi, path) -> Path:
    """Entries of the Poincare map along the first section coordinate."""
    theta = np.asarray(theta)
    Phi = np.asarray(Phi)
    fig = Figure(figsize=(7, 4), layout="constrained")
    ax = fig.subplots()
    x = theta.reshape(len(Phi), -1)[:, 1] if theta.ndim > 1 else theta
    order = np.argsort(x, kind="stable")
    for i, j in ((0, 0), (0, 1), (1, 0), (1, 1)):
        ax.plot(x[order], Phi[order, i, j], lw=1, label=f"entry ({i + 1},{j + 1})")
    ax.set_xlabel("section coordinate")
    ax.legend(loc="best", fontsize="small")
    return _save(fig, path)


def plot_embed(residuals, defect, path) -> Path:
    """Residual history of the embedding iteration and the round-trip defect."""
    fig = Figure(figsize=(8, 3.5), layout="constrained")
    ax1, ax2 = fig.subplots(1, 2)
    r = np.maximum(np.asarray(residuals, dtype=float), 1e-300)
    ax1.semilogy(np.arange(len(r)), r, "o-")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("sup residual")
    defect = np.asarray(defect, dtype=float)
    if defect.ndim == 1:
        ax2.semilogy(np.arange(len(defect)) / len(defect), np.maximum(defect, 1e-300))
        ax2.set_xlabel("section coordinate")
        ax2.set_ylabel("defect")
    else:
        im = ax2.imshow(np.log10(np.maximum(defect, 1e-300)).T, origin="lower", extent=(0, 1, 0, 1))
        fig.colorbar(im, ax=ax2, label="log10 defect")
    return _save(fig, path)
