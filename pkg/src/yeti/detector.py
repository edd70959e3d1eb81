"""Episode-based extrema detection of proactive intervention moments.

Frames whose SSIM with their predecessor is at least ``tau`` are ignored.
The first ``k`` eligible frames form a bootstrap episode: their count deltas
fix an extrema range (min and max delta, each widened by ``r``) and an
intervention is emitted at the k-th frame. Every later episode of ``k``
eligible frames may emit at most one intervention, at the first frame whose
delta falls in the range. After each intervention the next ``m`` frames
(wall-clock seconds) are skipped entirely. The global variant keeps the
bootstrap range; the local variant rebuilds it from each finished episode.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from yeti.alignment import AlignmentSeries
from yeti.frames import SsimSeries

VARIANTS = ("global", "local")


class DetectorError(ValueError):
    pass


@dataclass(frozen=True)
class DetectorConfig:
    """Detector hyperparameters; the defaults are the published configuration."""

    tau: float = 0.9
    conversation_interval_m: int = 1
    extrema_range_r: int = 1
    episode_interval_k: int = 5
    variant: str = "global"
    allow_multiple_per_episode: bool = False

    def __post_init__(self):
        variant = str(self.variant).lower()
        object.__setattr__(self, "variant", variant)
        # tau == 0 is tolerated: it simply disables every frame.
        if not 0.0 <= self.tau <= 1.0:
            raise DetectorError(f"tau must lie in [0, 1], got {self.tau}")
        if self.conversation_interval_m < 1:
            raise DetectorError(f"conversation interval m must be >= 1, got {self.conversation_interval_m}")
        if self.extrema_range_r < 0:
            raise DetectorError(f"extrema range r must be >= 0, got {self.extrema_range_r}")
        if self.episode_interval_k < 2:
            raise DetectorError(f"episode interval k must be >= 2, got {self.episode_interval_k}")
        if variant not in VARIANTS:
            raise DetectorError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ExtremaRange:
    """Closed integer bands around an episode's minimum and maximum delta."""

    low: int
    high: int
    r: int

    def __post_init__(self):
        if self.low > self.high:
            raise DetectorError(f"extrema range low centre {self.low} exceeds high centre {self.high}")

    @classmethod
    def from_deltas(cls, deltas: Sequence[int], r: int) -> ExtremaRange:
        return cls(int(min(deltas)), int(max(deltas)), r)

    @property
    def low_band(self) -> tuple[int, int]:
        return (self.low - self.r, self.low + self.r)

    @property
    def high_band(self) -> tuple[int, int]:
        return (self.high - self.r, self.high + self.r)

    def __contains__(self, x: int) -> bool:
        return abs(x - self.low) <= self.r or abs(x - self.high) <= self.r


@dataclass(frozen=True)
class InterventionEvent:
    frame_index: int
    episode_index: int
    trigger: str  # "bootstrap" or "extrema"
    delta_at_trigger: int


@dataclass(frozen=True)
class DetectorState:
    """Immutable snapshot of the detector between frames."""

    episode_index: int = 0
    frames_in_episode: int = 0
    episode_deltas: tuple[int, ...] = ()
    active_range: ExtremaRange | None = None
    conversation_block_until: int | None = None
    intervened_this_episode: bool = False
    last_frame: int | None = None


@dataclass(frozen=True)
class Step:
    """What happened at one frame; one row of the detection trace."""

    frame_index: int
    ssim: float
    delta: int
    eligible: bool
    blocked: bool
    in_range: bool | None  # None while no range exists yet
    event: InterventionEvent | None = None
    active_range: ExtremaRange | None = field(default=None, compare=False)


def eligible(t: int, ssim_series: SsimSeries | Sequence[float], config: DetectorConfig) -> bool:
    """Whether frame ``t`` may be considered at all: SSIM with its predecessor below tau."""
    if t < 1:
        return False  # frame 0 has no predecessor
    if isinstance(ssim_series, SsimSeries):
        value = ssim_series.at(t)
    else:
        if t > len(ssim_series):
            raise IndexError(f"frame {t} has no SSIM value (valid frames: 1..{len(ssim_series)})")
        value = ssim_series[t - 1]
    return value < config.tau


class InterventionDetector:
    """Online form of the detector: feed frames one at a time, get events with no lookahead."""

    def __init__(self, config: DetectorConfig | None = None):
        self.config = config or DetectorConfig()
        self._n = 0
        self._t = 0
        self._deltas: list[int] = []
        self._range: ExtremaRange | None = None
        self._block_until: int | None = None
        self._intervened = False
        self._last: int | None = None
        self.events: list[InterventionEvent] = []

    @property
    def state(self) -> DetectorState:
        return DetectorState(
            episode_index=self._n,
            frames_in_episode=self._t,
            episode_deltas=tuple(self._deltas),
            active_range=self._range,
            conversation_block_until=self._block_until,
            intervened_this_episode=self._intervened,
            last_frame=self._last,
        )

    def step(self, frame_index: int, ssim: float, delta: int) -> Step:
        cfg = self.config
        if self._last is not None and frame_index <= self._last:
            kind = "duplicate" if frame_index == self._last else "out-of-order"
            raise DetectorError(f"{kind} frame index {frame_index} after {self._last}")
        if frame_index < 1:
            raise DetectorError(f"frame index must be >= 1 (frame 0 has no predecessor), got {frame_index}")
        self._last = frame_index
        delta = int(delta)
        is_eligible = ssim < cfg.tau
        blocked = self._block_until is not None and frame_index <= self._block_until
        in_range = None if self._range is None else delta in self._range
        rec = dict(frame_index=frame_index, ssim=float(ssim), delta=delta,
                   eligible=is_eligible, blocked=blocked, in_range=in_range)
        if blocked or not is_eligible:
            return Step(**rec, active_range=self._range)

        event = None
        self._t += 1
        self._deltas.append(delta)
        if self._n == 0:
            if self._t == cfg.episode_interval_k:
                self._range = ExtremaRange.from_deltas(self._deltas, cfg.extrema_range_r)
                event = self._emit(frame_index, "bootstrap", delta)
                self._end_episode(recompute=False)
        else:
            if (not self._intervened or cfg.allow_multiple_per_episode) and in_range:
                event = self._emit(frame_index, "extrema", delta)
            if self._t == cfg.episode_interval_k:
                self._end_episode(recompute=cfg.variant == "local")
        return Step(**rec, event=event, active_range=self._range)

    def push(self, frame_index: int, ssim: float, delta: int) -> InterventionEvent | None:
        return self.step(frame_index, ssim, delta).event

    def _emit(self, frame_index: int, trigger: str, delta: int) -> InterventionEvent:
        ev = InterventionEvent(frame_index, self._n, trigger, delta)
        self.events.append(ev)
        self._intervened = True
        self._block_until = frame_index + self.config.conversation_interval_m
        return ev

    def _end_episode(self, recompute: bool) -> None:
        if recompute:
            self._range = ExtremaRange.from_deltas(self._deltas, self.config.extrema_range_r)
        self._n += 1
        self._t = 0
        self._deltas = []
        self._intervened = False


def _as_arrays(ssim_series, alignment) -> tuple[np.ndarray, np.ndarray]:
    s = ssim_series.values if isinstance(ssim_series, SsimSeries) else np.asarray(ssim_series, dtype=float)
    d = alignment.deltas if isinstance(alignment, AlignmentSeries) else np.asarray(alignment, dtype=np.int64)
    if len(s) != len(d):
        raise DetectorError(f"series length mismatch: {len(s)} SSIM values vs {len(d)} deltas")
    return s, d


def detect_trace(ssim_series, alignment, config: DetectorConfig | None = None) -> list[Step]:
    """Run the detector over complete series, returning one :class:`Step` per frame 1..T-1."""
    config = config or DetectorConfig()
    s, d = _as_arrays(ssim_series, alignment)
    if len(s) < config.episode_interval_k:
        raise DetectorError(
            f"series of {len(s)} frame pairs is shorter than the episode interval k={config.episode_interval_k}; "
            "no intervention is possible"
        )
    det = InterventionDetector(config)
    return [det.step(t, float(s[t - 1]), int(d[t - 1])) for t in range(1, len(s) + 1)]


def detect(ssim_series, alignment, config: DetectorConfig | None = None) -> list[InterventionEvent]:
    return [st.event for st in detect_trace(ssim_series, alignment, config) if st.event is not None]


def detect_streaming(
    feed: Iterable[tuple[int, float, int]], config: DetectorConfig | None = None
) -> Iterator[InterventionEvent]:
    """Yield events as soon as their triggering frame arrives."""
    det = InterventionDetector(config)
    for frame_index, s, delta in feed:
        ev = det.push(frame_index, s, delta)
        if ev is not None:
            yield ev


def write_detections_csv(path: str | Path, events: Sequence[InterventionEvent]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "episode", "trigger", "delta"])
        for ev in events:
            w.writerow([ev.frame_index, ev.episode_index, ev.trigger, ev.delta_at_trigger])


def write_detections_json(path: str | Path, events: Sequence[InterventionEvent],
                          config: DetectorConfig, n_frames: int | None = None) -> None:
    doc = {
        "config": config.to_dict(),
        "n_frames": n_frames,
        "events": [asdict(ev) for ev in events],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_detections(path: str | Path) -> tuple[list[int], int | None]:
    """Detection frame indices (and session length when recorded) from a CSV or JSON file."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        doc = json.loads(path.read_text())
        return [int(ev["frame_index"]) for ev in doc["events"]], doc.get("n_frames")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "frame_index" not in reader.fieldnames:
            raise DetectorError(f"{path}: expected a frame_index column")
        return [int(row["frame_index"]) for row in reader], None


def _fmt_bool(b: bool | None) -> str:
    return "" if b is None else str(int(b))


def write_trace_csv(path: str | Path, steps: Sequence[Step]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "ssim", "delta", "eligible", "blocked", "in_range", "event"])
        for st in steps:
            w.writerow([
                st.frame_index,
                f"{st.ssim:.9g}",
                st.delta,
                _fmt_bool(st.eligible),
                _fmt_bool(st.blocked),
                _fmt_bool(st.in_range),
                st.event.trigger if st.event else "",
            ])
