"""Figure rendering for scan datasets and beat fits.

One SVG per time window, written next to the delimited output.  The SVG
backend is pinned to deterministic ids and stripped of timestamps so that
repeated runs with the same seed produce byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

matplotlib.rcParams["svg.hashsalt"] = "modebeat"


def _save(fig, path: Path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_windows(dataset, out_base: Path, report=None, delta: float | None = None):
    """Scatter of p_e(T) per window, with the fitted sinusoid when given.

    Returns the list of written paths; files are named <out_base>_w<k>.svg.
    """
    out_base = Path(out_base)
    groups: dict[int, list] = {}
    for pt in dataset.points:
        groups.setdefault(pt.window, []).append(pt)
    window_fit = {}
    if report is not None:
        window_fit = {w.window: w for w in report.windows}

    paths = []
    for wid in sorted(groups):
        pts = [p for p in groups[wid] if np.isfinite(p.p_e)]
        if not pts:
            continue
        t_us = np.array([p.t * 1e6 for p in pts])
        y = np.array([p.p_e for p in pts])
        yerr = np.array([p.stderr for p in pts])
        fig, ax = plt.subplots(figsize=(6.0, 3.4))
        if np.all(np.isfinite(yerr)) and np.any(yerr > 0) and np.any(yerr < 1):
            ax.errorbar(t_us, y, yerr=yerr, fmt="o", ms=3.5, lw=1, capsize=2, color="k")
        else:
            ax.plot(t_us, y, "ko", ms=3.5)
        if wid in window_fit and delta is not None:
            fit = window_fit[wid]
            tt = np.linspace(t_us.min(), t_us.max(), 600)
            model = fit.offset + 0.5 * fit.contrast * np.cos(
                delta * tt * 1e-6 + report.phi_shared
            )
            ax.plot(tt, model, "-", color="tab:red", lw=1.2)
            ax.set_title(
                f"window {wid}: contrast {fit.contrast:.3f}, offset {fit.offset:.3f}",
                fontsize=10,
            )
        else:
            ax.set_title(f"window {wid}", fontsize=10)
        ax.set_xlabel("T (us)")
        ax.set_ylabel("P_e")
        ax.set_ylim(-0.05, 1.05)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = out_base.parent / f"{out_base.stem}_w{wid}.svg"
        _save(fig, path)
        paths.append(path)
    return paths
