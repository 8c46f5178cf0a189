"""PNG figures written next to the CSV/JSON outputs (non-interactive backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)


def _positive(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 0, y, np.nan)


def tail_curves(path, u, curves: dict, title: str = "", band=None):
    """Log-log plot of tail curves; ``band`` is ``(lower, upper)`` around the first curve."""
    fig, ax = plt.subplots(figsize=(6, 4))
    if band is not None:
        ax.fill_between(u, _positive(band[0]), _positive(band[1]), alpha=0.25, color="C0",
                        label="DKW band")
    for k, (label, y) in enumerate(curves.items()):
        ax.plot(u, _positive(y), label=label, color=f"C{k}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("u")
    ax.set_ylabel("P(sup |xi| > u)")
    ax.set_title(title)
    ax.legend()
    _save(fig, path)


def xy_curves(path, x, curves: dict, xlabel: str, ylabel: str, title: str = "",
              logx: bool = False, logy: bool = False):
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, y in curves.items():
        y = np.asarray(y, dtype=float)
        ax.plot(x, _positive(y) if logy else np.where(np.isfinite(y), y, np.nan), label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(curves) > 1:
        ax.legend()
    _save(fig, path)
