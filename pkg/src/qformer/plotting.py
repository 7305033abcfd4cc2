"""Figure rendering for report tables (written to files, never shown)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def save_loglog(path: str | Path, x, series: dict, xlabel: str, ylabel: str,
                title: str = "") -> None:
    """Log-log scatter with fitted slopes in the legend."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, ys in series.items():
        slope = fit_loglog_slope(x, ys)
        ax.loglog(x, ys, "o-", label=f"{name} (slope {slope:.2f})")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_semilogy(path: str | Path, x, series: dict, xlabel: str, ylabel: str,
                  title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, ys in series.items():
        ax.semilogy(x, ys, "o-", label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
