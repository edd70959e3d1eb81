"""Hyperparameter grid sweeps over one or more sessions."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from yeti.alignment import AlignmentSeries, compute_alignment, load_counts, read_alignment_csv
from yeti.detector import DetectorConfig, detect
from yeti.evaluation import DEFAULT_WINDOW_S, Annotation, evaluate_sessions, filter_sessions, read_annotations
from yeti.frames import SsimSeries, compute_ssim_series, load_frame_sequence, read_ssim_csv

DEFAULT_TAUS = (0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_CONV_INTERVALS = (1, 2, 3, 4, 5)
DEFAULT_EXTREMA_RANGES = (0, 1, 2)


class SweepError(ValueError):
    pass


@dataclass(frozen=True)
class SweepGrid:
    taus: Sequence[float] = DEFAULT_TAUS
    conv_intervals: Sequence[int] = DEFAULT_CONV_INTERVALS
    extrema_ranges: Sequence[int] = DEFAULT_EXTREMA_RANGES
    episode_intervals: Sequence[int] = (5,)
    variants: Sequence[str] = ("global", "local")

    def configs(self) -> list[DetectorConfig]:
        """Grid points in a fixed order: variant, tau, m, r, k."""
        axes = (self.variants, self.taus, self.conv_intervals, self.extrema_ranges, self.episode_intervals)
        if any(len(a) == 0 for a in axes):
            raise SweepError("every grid axis needs at least one value")
        return [
            DetectorConfig(tau=tau, conversation_interval_m=m, extrema_range_r=r, episode_interval_k=k, variant=v)
            for v, tau, m, r, k in itertools.product(*axes)
        ]


@dataclass(eq=False)
class SessionSignals:
    name: str
    ssim: SsimSeries
    alignment: AlignmentSeries
    annotations: list[Annotation]

    @property
    def n_frames(self) -> int:
        return len(self.ssim) + 1


def load_session_signals(path: str | Path, workers: int = 1) -> SessionSignals:
    """Signals for a session directory.

    Uses ``ssim.csv``/``alignment.csv`` when present, otherwise computes them
    from ``frames/`` and ``counts.csv``. ``annotations.jsonl`` is required.
    """
    root = Path(path)
    if (root / "ssim.csv").is_file():
        s = read_ssim_csv(root / "ssim.csv")
    else:
        s = compute_ssim_series(load_frame_sequence(root / "frames"), workers=workers)
    if (root / "alignment.csv").is_file():
        a = read_alignment_csv(root / "alignment.csv")
    else:
        a = compute_alignment(load_counts(root / "counts.csv", len(s) + 1))
    return SessionSignals(root.name, s, a, read_annotations(root / "annotations.jsonl"))


def _row(cfg: DetectorConfig, report) -> dict:
    row = {
        "variant": cfg.variant,
        "tau": cfg.tau,
        "conv_interval": cfg.conversation_interval_m,
        "extrema_range": cfg.extrema_range_r,
        "episode_interval": cfg.episode_interval_k,
    }
    row.update(report.flat_row())
    return row


def run_sweep(
    sessions: Sequence[SessionSignals],
    grid: SweepGrid | None = None,
    mode: str = "intervention",
    window_s: float = DEFAULT_WINDOW_S,
    policy: str = "all",
    averaging: str = "micro",
    workers: int = 1,
) -> list[dict]:
    """One report row per grid point, in grid order regardless of ``workers``."""
    grid = grid or SweepGrid()
    configs = grid.configs()
    kept = filter_sessions({s.name: s.annotations for s in sessions}, policy)
    chosen = [s for s in sessions if s.name in kept]
    if not chosen:
        raise SweepError(f"no session survives the {policy!r} policy")

    def run(cfg: DetectorConfig) -> dict:
        per_session = []
        for s in chosen:
            frames = [ev.frame_index for ev in detect(s.ssim, s.alignment, cfg)]
            per_session.append((frames, s.annotations, s.n_frames))
        report = evaluate_sessions(per_session, mode, window_s=window_s, averaging=averaging, policy=policy,
                                   config=cfg.to_dict())
        return _row(cfg, report)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, configs))
    return [run(cfg) for cfg in configs]
