"""Report figures rendered next to the CSV/JSON outputs.

Figures are drawn with the object-oriented API on an Agg canvas, so no global
pyplot state is touched and repeated runs produce identical PNG bytes.
"""
from __future__ import annotations

import io

import matplotlib
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .io import atomic_write

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "lines.linewidth": 1.5,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _new_figure(nrows, ncols, width=6.4, height=None):
    fig = Figure(figsize=(width, height or 2.2 * nrows), dpi=100)
    FigureCanvasAgg(fig)
    return fig, fig.subplots(nrows, ncols, squeeze=False)


def _save(fig, path) -> None:
    buf = io.BytesIO()
    # Drop the version string so output bytes do not depend on the installed matplotlib.
    fig.savefig(buf, format="png", metadata={"Software": None})
    atomic_write(path, buf.getvalue())


def plot_diagnostics(diagnostics, path) -> None:
    """Velocity norm, mask coverage and differential norm against time."""
    t = np.array([d.t for d in diagnostics])
    series = [
        ("velocity norm", [d.v_norm for d in diagnostics]),
        ("mask coverage", [d.mask_coverage for d in diagnostics]),
        ("|mean differential|", [d.d_bar_norm for d in diagnostics]),
    ]
    with matplotlib.rc_context(STYLE):
        fig, axes = _new_figure(3, 1, height=6.0)
        for ax, (label, values) in zip(axes[:, 0], series):
            ax.plot(t, values, marker="o", markersize=2.5, color="k")
            ax.set_ylabel(label)
            ax.set_xlim(max(t.max(), 1e-9) if t.size else 1, 0)
        axes[-1, 0].set_xlabel("t")
        fig.tight_layout()
        _save(fig, path)


def plot_warp_pairs(pairs, path) -> None:
    """Per frame-pair warp SSIM and L1 error."""
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 3)
    idx = np.arange(pairs.shape[0])
    with matplotlib.rc_context(STYLE):
        fig, axes = _new_figure(2, 1, height=4.0)
        axes[0, 0].bar(idx, pairs[:, 0], color="0.35")
        axes[0, 0].set_ylabel("warp SSIM")
        axes[0, 0].set_ylim(min(0.0, pairs[:, 0].min(initial=0.0)), 1.05)
        axes[1, 0].bar(idx, pairs[:, 1], color="0.6")
        axes[1, 0].set_ylabel("warp L1")
        axes[1, 0].set_xlabel("frame pair (t, t+1)")
        fig.tight_layout()
        _save(fig, path)
