"""Deterministic synthetic sessions with planted interventions.

A scene is a set of filled squares on a black background, placed on a fixed
grid so that pixels can be recounted exactly. Each planted intervention sits
inside an activity window: a few frames where the user moves squares around
(count unchanged, SSIM drops), one burst frame where squares are added or
removed (the count changes), and a short settling span of sensor jitter on
either side. Everything else is idle: the frame repeats unchanged.

Per-frame phases are encoded as one character each:
``.`` idle, ``j`` jitter, ``m`` motion, ``B`` planted burst, ``d`` distractor
count change (only when the scenario is not cooperative).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from yeti.alignment import CountSeries, compute_alignment, load_counts, write_counts_csv
from yeti.evaluation import INTERVENTION_TYPES, Annotation, read_annotations, write_annotations
from yeti.frames import FrameSequence, load_frame_sequence, ssim, write_pgm

OBJECT_LEVEL = 255
COUNT_THRESHOLD = 128
JITTER_AMPLITUDE = 2
JITTER_FRACTION = 0.01
IDLE_SSIM_FLOOR = 0.99
UTTERANCE_S = 2.0


class ScenarioError(ValueError):
    pass


def _default_mix() -> dict[str, float]:
    return {cls: 1.0 for cls in INTERVENTION_TYPES}


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 0
    duration_s: int = 300
    idle_fraction: float = 0.8
    n_interventions: int = 8
    frame_size: tuple[int, int] = (64, 64)  # (width, height)
    object_size_px: int = 8
    class_mix: dict[str, float] = field(default_factory=_default_mix)
    cooperative: bool = True
    activity_halfwidth: int = 3
    settle_s: int = 2
    max_burst: int = 1
    initial_objects: int = 3
    max_objects: int = 5

    def __post_init__(self):
        object.__setattr__(self, "frame_size", tuple(int(v) for v in self.frame_size))
        if not 0 <= self.seed < 2**64:
            raise ScenarioError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.duration_s < 2:
            raise ScenarioError("duration_s must be at least 2")
        if not 0.0 <= self.idle_fraction <= 1.0:
            raise ScenarioError(f"idle_fraction must lie in [0, 1], got {self.idle_fraction}")
        if self.n_interventions < 0:
            raise ScenarioError("n_interventions must be non-negative")
        if self.object_size_px < 1 or self.activity_halfwidth < 0 or self.settle_s < 0 or self.max_burst < 1:
            raise ScenarioError("object size and burst size must be positive; halfwidth and settle non-negative")
        unknown = set(self.class_mix) - set(INTERVENTION_TYPES)
        if unknown or not self.class_mix or min(self.class_mix.values()) < 0 or sum(self.class_mix.values()) <= 0:
            raise ScenarioError(f"class_mix must weight a subset of {INTERVENTION_TYPES}")
        if len(self.grid_slots) < self.max_objects + 1:
            raise ScenarioError("frame too small for the requested number of objects")
        if not 1 <= self.initial_objects <= self.max_objects or self.max_burst >= self.max_objects:
            raise ScenarioError("need 1 <= initial_objects <= max_objects and max_burst < max_objects")
        if self.n_interventions and self.n_interventions * (self.footprint + 1) > self.duration_s:
            raise ScenarioError(
                f"infeasible: {self.n_interventions} interventions need at least "
                f"{self.n_interventions * (self.footprint + 1)} s, duration is {self.duration_s} s"
            )

    @property
    def footprint(self) -> int:
        """Frames occupied by one planted activity window including settling spans."""
        return 2 * (self.activity_halfwidth + self.settle_s) + 1

    @property
    def cell(self) -> int:
        return self.object_size_px + 2

    @property
    def grid_slots(self) -> list[tuple[int, int]]:
        w, h = self.frame_size
        return [(r, c) for r in range(h // self.cell) for c in range(w // self.cell)]

    def to_json(self) -> dict:
        d = asdict(self)
        d["frame_size"] = list(self.frame_size)
        return d

    @classmethod
    def from_json(cls, d: dict) -> ScenarioSpec:
        d = dict(d)
        d["frame_size"] = tuple(d["frame_size"])
        return cls(**d)


@dataclass(eq=False)
class SyntheticSession:
    frames: FrameSequence
    counts: CountSeries
    annotations: list[Annotation]
    manifest: dict

    @property
    def spec(self) -> ScenarioSpec:
        return ScenarioSpec.from_json(self.manifest["spec"])


def _rng(seed: int, *keys: int) -> np.random.Generator:
    # counter-style: each (seed, purpose, index) gets its own independent stream
    return np.random.default_rng([seed, *keys])


_PURPOSE_LAYOUT, _PURPOSE_BURST, _PURPOSE_FRAME, _PURPOSE_CLASS, _PURPOSE_DISTRACT = range(5)


def _plan_phases(spec: ScenarioSpec) -> tuple[list[str], list[int]]:
    T = spec.duration_s
    phases = ["."] * T
    h, s = spec.activity_halfwidth, spec.settle_s
    bursts = []
    if spec.n_interventions:
        seg = T // spec.n_interventions
        lo, hi = h + s + 1, seg - h - s - 1
        for i in range(spec.n_interventions):
            off = int(_rng(spec.seed, _PURPOSE_BURST, i).integers(lo, hi + 1)) if hi > lo else lo
            b = i * seg + off
            bursts.append(b)
            for t in range(b - h - s, b + h + s + 1):
                phases[t] = "j" if abs(t - b) > h else "m"
            phases[b] = "B"

    budget = round((1.0 - spec.idle_fraction) * (T - 1))
    extra = budget - sum(p != "." for p in phases[1:])
    rng = _rng(spec.seed, _PURPOSE_DISTRACT)
    attempts = 0
    while extra > 0 and attempts < 200:
        attempts += 1
        length = int(min(extra, rng.integers(3, 9)))
        start = int(rng.integers(1, max(2, T - length)))
        lo, hi = start - 1, start + length + 1  # keep an idle frame on either side
        if lo < 0 or hi > T or any(p != "." for p in phases[lo:hi]):
            continue
        for t in range(start, start + length):
            if not spec.cooperative and rng.random() < 0.3:
                phases[t] = "d"
            else:
                phases[t] = "m"
        extra -= length
    return phases, bursts


def _scene_states(spec: ScenarioSpec, phases: list[str]) -> list[tuple[int, ...]]:
    n_slots = len(spec.grid_slots)
    occupied = set(_rng(spec.seed, _PURPOSE_LAYOUT).choice(n_slots, spec.initial_objects, replace=False).tolist())
    states = [tuple(sorted(occupied))]
    for t in range(1, len(phases)):
        p = phases[t]
        rng = _rng(spec.seed, _PURPOSE_FRAME, t, 0)
        free = sorted(set(range(n_slots)) - occupied)
        if p == "m":
            out = int(rng.choice(sorted(occupied)))
            occupied = (occupied - {out}) | {int(rng.choice(free))}
        elif p in ("B", "d"):
            mag = int(rng.integers(1, spec.max_burst + 1))
            can_add = len(occupied) + mag <= spec.max_objects
            can_remove = len(occupied) - mag >= 1
            add = can_add and (not can_remove or rng.random() < 0.5)
            if add:
                occupied = occupied | set(rng.choice(free, mag, replace=False).tolist())
            else:
                occupied = occupied - set(rng.choice(sorted(occupied), mag, replace=False).tolist())
        states.append(tuple(sorted(occupied)))
    return states


def render(spec: ScenarioSpec, slots: tuple[int, ...], jitter_key: int | None = None) -> np.ndarray:
    w, h = spec.frame_size
    img = np.zeros((h, w), dtype=np.int16)
    grid = spec.grid_slots
    for s in slots:
        r, c = grid[s]
        y, x = r * spec.cell + 1, c * spec.cell + 1
        img[y:y + spec.object_size_px, x:x + spec.object_size_px] = OBJECT_LEVEL
    if jitter_key is not None:
        rng = _rng(spec.seed, _PURPOSE_FRAME, jitter_key, 1)
        n = max(1, int(round(JITTER_FRACTION * img.size)))
        idx = rng.choice(img.size, n, replace=False)
        img.flat[idx] += rng.choice([-JITTER_AMPLITUDE, JITTER_AMPLITUDE], n).astype(np.int16)
    return np.clip(img, 0, 255).astype(np.uint8)


def generate(spec: ScenarioSpec, workers: int = 1) -> SyntheticSession:
    phases, bursts = _plan_phases(spec)
    states = _scene_states(spec, phases)

    def frame(t):
        return render(spec, states[t], jitter_key=t if phases[t] == "j" else None)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pixels = list(pool.map(frame, range(len(states))))
    else:
        pixels = [frame(t) for t in range(len(states))]

    classes = sorted(spec.class_mix)
    weights = np.array([spec.class_mix[c] for c in classes], dtype=float)
    weights /= weights.sum()
    annotations = []
    for i, b in enumerate(bursts):
        cls = classes[int(_rng(spec.seed, _PURPOSE_CLASS, i).choice(len(classes), p=weights))]
        annotations.append(Annotation(float(b), float(b) + UTTERANCE_S, "expert", cls, True))

    counts = CountSeries(np.array([len(s) for s in states], dtype=np.int64))
    idle = sum(p == "." for p in phases[1:]) / max(1, len(phases) - 1)
    manifest = {
        "spec": spec.to_json(),
        "n_frames": len(states),
        "bursts": bursts,
        "phases": "".join(phases),
        "realized_idle_fraction": idle,
    }
    session = SyntheticSession(FrameSequence(pixels), counts, annotations, manifest)
    report = verify(session)
    if not report.ok:
        raise ScenarioError("generator produced an inconsistent session: " + "; ".join(report.failures[:5]))
    return session


@dataclass
class VerifyReport:
    failures: list[str] = field(default_factory=list)
    checked: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures


def recount(pixels: np.ndarray) -> int:
    _, n = ndimage.label(pixels >= COUNT_THRESHOLD)
    return int(n)


def verify(session: SyntheticSession) -> VerifyReport:
    """Re-derive every session invariant from pixels, not from the generator's bookkeeping."""
    rep = VerifyReport()
    frames, counts = session.frames, session.counts.counts
    phases = session.manifest.get("phases", "")
    spec = session.spec

    def check(cond: bool, msg: str):
        rep.checked += 1
        if not cond:
            rep.failures.append(msg)

    check(len(counts) == len(frames), f"count series length {len(counts)} != {len(frames)} frames")
    check(len(phases) == len(frames), f"phase script length {len(phases)} != {len(frames)} frames")
    actual = np.array([recount(f.pixels) for f in frames], dtype=np.int64)
    for t in range(min(len(counts), len(actual))):
        check(actual[t] == counts[t], f"frame {t}: count expected {counts[t]}, actual {actual[t]}")

    deltas = compute_alignment(actual).deltas if len(actual) > 1 else np.array([], dtype=np.int64)
    for t in range(1, min(len(phases), len(frames))):
        if phases[t] == ".":
            check(deltas[t - 1] == 0, f"frame {t}: idle frame changes count by {deltas[t - 1]}")
            s = ssim(frames[t - 1], frames[t])
            check(s > IDLE_SSIM_FLOOR, f"frame {t}: SSIM-idle check failed (ssim {s:.6f})")
        if spec.cooperative and phases[t] not in ("B",):
            check(deltas[t - 1] == 0, f"frame {t}: non-burst count change {deltas[t - 1]} in cooperative session")

    truths = [a for a in session.annotations if a.is_intervention]
    check(len(truths) == spec.n_interventions,
          f"{len(truths)} planted annotations, expected {spec.n_interventions}")
    for a in truths:
        t0 = int(a.start_s)
        near = [abs(int(deltas[t - 1])) for t in range(t0 - 1, t0 + 2) if 1 <= t <= len(deltas)]
        check(max(near, default=0) >= 1, f"annotation at {a.start_s} s: no count change within 1 s")
    return rep


def write_session(session: SyntheticSession, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    fdir = out / "frames"
    fdir.mkdir(parents=True, exist_ok=True)
    for stale in fdir.glob("*.pgm"):
        stale.unlink()
    width = max(5, len(str(len(session.frames) - 1)))
    for f in session.frames:
        write_pgm(fdir / f"frame_{f.index:0{width}d}.pgm", f.pixels)
    write_counts_csv(out / "counts.csv", session.counts)
    write_annotations(out / "annotations.jsonl", session.annotations)
    (out / "manifest.json").write_text(json.dumps(session.manifest, indent=2, sort_keys=True) + "\n")
    return out


def read_session(path: str | Path) -> SyntheticSession:
    root = Path(path)
    frames = load_frame_sequence(root / "frames")
    counts = load_counts(root / "counts.csv", len(frames))
    annotations = read_annotations(root / "annotations.jsonl")
    manifest = json.loads((root / "manifest.json").read_text())
    return SyntheticSession(frames, counts, annotations, manifest)
