"""Figures written next to the CSV outputs.

Rendering is headless (Agg); every function takes an output path and returns it.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.linewidth": 0.6,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "savefig.dpi": 150,
    "figure.figsize": (7.0, 3.2),
}

EVENT_COLOR = "#d62728"
TRUTH_COLOR = "#2ca02c"


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_trace(steps: Sequence, path, tau: float | None = None, truths: Sequence[float] = ()) -> Path:
    """SSIM and count-delta traces over time with detected events (and truths, if given)."""
    frames = [s.frame_index for s in steps]
    with plt.rc_context(STYLE):
        fig, (ax_s, ax_d) = plt.subplots(2, 1, sharex=True, figsize=(7.0, 4.0))
        ax_s.plot(frames, [s.ssim for s in steps], color="0.2")
        if tau is not None:
            ax_s.axhline(tau, ls="--", color="0.5", label=f"threshold {tau:g}")
        ax_s.set_ylabel("SSIM vs previous")
        ax_d.step(frames, [s.delta for s in steps], where="mid", color="#1f77b4")
        ax_d.set_ylabel("count delta")
        ax_d.set_xlabel("time (s)")
        for ax in (ax_s, ax_d):
            for i, t in enumerate(truths):
                ax.axvline(t, color=TRUTH_COLOR, alpha=0.5, lw=0.8, label="annotated" if i == 0 else None)
            events = [s.frame_index for s in steps if s.event is not None]
            for i, f in enumerate(events):
                ax.axvline(f, color=EVENT_COLOR, ls=":", lw=0.9, label="detected" if i == 0 else None)
        ax_s.legend(loc="lower left", frameon=False, ncol=3)
        return _save(fig, path)


def plot_histogram(hist: Mapping[int, int], path) -> Path:
    """Distribution of count deltas."""
    keys = sorted(hist)
    total = sum(hist.values()) or 1
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.bar(keys, [hist[k] / total for k in keys], width=0.8, color="#1f77b4")
        ax.set_xlabel("count delta")
        ax.set_ylabel("fraction of frames")
        return _save(fig, path)


def plot_sweep(rows: Sequence[Mapping], path, param: str, metric: str = "f_measure") -> Path:
    """One metric against one swept parameter, a line per variant; other axes take their first value."""
    others = ("tau", "conv_interval", "extrema_range", "episode_interval")
    fixed = {k: rows[0][k] for k in others if k != param}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for variant in dict.fromkeys(r["variant"] for r in rows):
            sel = [r for r in rows if r["variant"] == variant and all(r[k] == v for k, v in fixed.items())]
            xs = [r[param] for r in sel]
            ys = [float("nan") if r[metric] == "n/a" else float(r[metric]) for r in sel]
            ax.plot(xs, ys, marker="o", ms=3, label=variant)
        ax.set_xlabel(param.replace("_", " "))
        ax.set_ylabel(metric.replace("_", " "))
        ax.legend(frameon=False)
        return _save(fig, path)
