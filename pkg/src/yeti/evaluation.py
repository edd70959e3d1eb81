"""Windowed matching of detections against annotated conversation starts."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

INTERVENTION_TYPES = ("follow_up_instruction", "confirm_action", "correct_mistake")
INTERACTION_TYPES = INTERVENTION_TYPES + (
    "high_level_instruction",
    "opening_remarks",
    "closing_remarks",
    "adjusting_video",
    "other",
)
CONVERSATION_TYPES = INTERACTION_TYPES + ("reactive",)
SPEAKERS = ("expert", "user")
MODES = ("intervention", "interaction")
POLICIES = ("all", "both_speakers", "expert_only")
DEFAULT_WINDOW_S = 5.0


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class Annotation:
    start_s: float
    end_s: float
    speaker: str
    conversation_type: str
    proactive: bool

    def __post_init__(self):
        if not (self.start_s >= 0 and math.isfinite(self.start_s)):
            raise EvaluationError(f"start_s must be a non-negative number, got {self.start_s}")
        if not self.end_s >= self.start_s:
            raise EvaluationError(f"end_s {self.end_s} precedes start_s {self.start_s}")
        if self.speaker not in SPEAKERS:
            raise EvaluationError(f"unknown speaker {self.speaker!r}")
        if self.conversation_type not in CONVERSATION_TYPES:
            raise EvaluationError(f"unknown conversation type {self.conversation_type!r}")

    @property
    def is_interaction(self) -> bool:
        return self.proactive and self.conversation_type in INTERACTION_TYPES

    @property
    def is_intervention(self) -> bool:
        return self.proactive and self.conversation_type in INTERVENTION_TYPES

    def to_json(self) -> dict:
        return {"start_s": self.start_s, "end_s": self.end_s, "speaker": self.speaker,
                "type": self.conversation_type, "proactive": self.proactive}

    @classmethod
    def from_json(cls, obj: Mapping) -> Annotation:
        try:
            return cls(float(obj["start_s"]), float(obj["end_s"]), obj["speaker"], obj["type"],
                       bool(obj["proactive"]))
        except KeyError as exc:
            raise EvaluationError(f"annotation missing field {exc}") from None


def read_annotations(path: str | Path) -> list[Annotation]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(Annotation.from_json(json.loads(line)))
            except (json.JSONDecodeError, EvaluationError) as exc:
                raise EvaluationError(f"{path}:{lineno}: {exc}") from None
    return out


def write_annotations(path: str | Path, annotations: Iterable[Annotation]) -> None:
    with open(path, "w") as fh:
        for a in annotations:
            fh.write(json.dumps(a.to_json()) + "\n")


@dataclass
class MatchResult:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    matched_pairs: list[tuple[int, float]] = field(default_factory=list)

    def __add__(self, other: MatchResult) -> MatchResult:
        return MatchResult(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
                           self.tn + other.tn, self.matched_pairs + other.matched_pairs)

    def counts(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def match_detections(
    detections: Sequence[int],
    truths: Sequence[float],
    window_s: float = DEFAULT_WINDOW_S,
    n_frames: int | None = None,
) -> MatchResult:
    """Greedy one-to-one matching, nearest pairs first.

    A pair is admissible when ``|detection - truth| <= window_s``. Ties in
    distance go to the earlier truth, then the earlier detection. TN is the
    frame-level complement ``n_frames - TP - FP - FN`` (floored at zero); when
    ``n_frames`` is omitted the session is taken to end at the last event.
    """
    if not window_s > 0:
        raise EvaluationError(f"window must be positive, got {window_s}")
    dets = [int(d) for d in detections]
    gts = [float(g) for g in truths]
    if n_frames is None:
        n_frames = int(math.floor(max(dets + gts, default=-1))) + 1
    bad = [d for d in dets if not 0 <= d < n_frames]
    if bad:
        raise EvaluationError(f"detection at frame {bad[0]} outside session range 0..{n_frames - 1}")

    pairs = sorted(
        (abs(d - g), g, gi, d, di)
        for di, d in enumerate(dets)
        for gi, g in enumerate(gts)
        if abs(d - g) <= window_s
    )
    used_d: set[int] = set()
    used_g: set[int] = set()
    matched = []
    for _, g, gi, d, di in pairs:
        if di in used_d or gi in used_g:
            continue
        used_d.add(di)
        used_g.add(gi)
        matched.append((d, g))
    matched.sort()
    tp = len(matched)
    fp = len(dets) - tp
    fn = len(gts) - tp
    tn = max(0, n_frames - tp - fp - fn)
    return MatchResult(tp, fp, fn, tn, matched)


@dataclass(frozen=True)
class Metrics:
    """Precision, recall, F-measure and accuracy; ``None`` marks a 0/0 case."""

    precision: float | None
    recall: float | None
    f_measure: float | None
    accuracy: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {"precision": self.precision, "recall": self.recall,
                "f_measure": self.f_measure, "accuracy": self.accuracy}

    def formatted(self, digits: int = 4) -> dict[str, str]:
        return {k: fmt_metric(v, digits) for k, v in self.as_dict().items()}


def fmt_metric(value: float | None, digits: int = 4) -> str:
    return "n/a" if value is None else f"{value:.{digits}f}"


def _ratio(num: float, den: float) -> float | None:
    return None if den == 0 else num / den


def compute_metrics(m: MatchResult) -> Metrics:
    p = _ratio(m.tp, m.tp + m.fp)
    r = _ratio(m.tp, m.tp + m.fn)
    f = None if p is None or r is None else _ratio(2 * p * r, p + r)
    acc = _ratio(m.tp + m.tn, m.tp + m.tn + m.fp + m.fn)
    return Metrics(p, r, f, acc)


@dataclass
class EvalReport:
    mode: str
    counts: MatchResult
    metrics: Metrics
    per_class: dict[str, tuple[MatchResult, Metrics]] = field(default_factory=dict)
    config: dict | None = None
    policy: str = "all"
    window_s: float = DEFAULT_WINDOW_S
    sessions: int = 1
    averaging: str = "micro"

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "mode": self.mode,
            "policy": self.policy,
            "window_s": self.window_s,
            "sessions": self.sessions,
            "averaging": self.averaging,
            "counts": self.counts.counts(),
            "metrics": self.metrics.as_dict(),
            "per_class": {
                cls: {"counts": mr.counts(), **met.as_dict()} for cls, (mr, met) in self.per_class.items()
            },
        }

    def flat_row(self) -> dict[str, str | int]:
        row: dict[str, str | int] = {"mode": self.mode, "policy": self.policy, "sessions": self.sessions}
        row.update(self.counts.counts())
        row.update(self.metrics.formatted())
        for cls, (_, met) in self.per_class.items():
            for k in ("precision", "recall", "f_measure"):
                row[f"{cls}_{k}"] = fmt_metric(getattr(met, k))
        return row


def classes_for(mode: str) -> tuple[str, ...]:
    if mode == "intervention":
        return INTERVENTION_TYPES
    if mode == "interaction":
        return INTERACTION_TYPES
    raise EvaluationError(f"unknown mode {mode!r}; expected one of {MODES}")


def truths_for(annotations: Iterable[Annotation], mode: str, cls: str | None = None) -> list[float]:
    classes = classes_for(mode)
    if cls is not None and cls not in classes:
        raise EvaluationError(f"unknown class {cls!r} for {mode} mode; expected one of {classes}")
    keep = (lambda a: a.is_intervention) if mode == "intervention" else (lambda a: a.is_interaction)
    return sorted(a.start_s for a in annotations if keep(a) and (cls is None or a.conversation_type == cls))


def _session_results(detections, annotations, mode, class_filter, window_s, n_frames):
    overall = match_detections(detections, truths_for(annotations, mode, class_filter), window_s, n_frames)
    per_class = {
        cls: match_detections(detections, truths_for(annotations, mode, cls), window_s, n_frames)
        for cls in classes_for(mode)
    }
    return overall, per_class


def evaluate_session(
    detections: Sequence[int],
    annotations: Sequence[Annotation],
    mode: str = "intervention",
    class_filter: str | None = None,
    window_s: float = DEFAULT_WINDOW_S,
    n_frames: int | None = None,
    config: dict | None = None,
) -> EvalReport:
    """Score one session. Per-class rows match the same detections against one class's truths."""
    return evaluate_sessions([(detections, annotations, n_frames)], mode, class_filter, window_s, config=config)


def evaluate_sessions(
    sessions: Sequence[tuple[Sequence[int], Sequence[Annotation], int | None]],
    mode: str = "intervention",
    class_filter: str | None = None,
    window_s: float = DEFAULT_WINDOW_S,
    averaging: str = "micro",
    policy: str = "all",
    config: dict | None = None,
) -> EvalReport:
    """Aggregate several sessions.

    ``micro`` sums raw counts before computing metrics. ``macro`` averages each
    metric over sessions where it is defined.
    """
    if averaging not in ("micro", "macro"):
        raise EvaluationError(f"unknown averaging {averaging!r}")
    classes = classes_for(mode)
    results = [_session_results(d, a, mode, class_filter, window_s, n) for d, a, n in sessions]
    total = sum((o for o, _ in results), MatchResult())
    per_total = {cls: sum((pc[cls] for _, pc in results), MatchResult()) for cls in classes}
    if averaging == "micro":
        metrics = compute_metrics(total)
        per_class = {cls: (mr, compute_metrics(mr)) for cls, mr in per_total.items()}
    else:
        metrics = _macro([compute_metrics(o) for o, _ in results])
        per_class = {
            cls: (per_total[cls], _macro([compute_metrics(pc[cls]) for _, pc in results])) for cls in classes
        }
    return EvalReport(mode, total, metrics, per_class, config=config, policy=policy,
                      window_s=window_s, sessions=len(sessions), averaging=averaging)


def _macro(items: Sequence[Metrics]) -> Metrics:
    def mean(name):
        vals = [getattr(m, name) for m in items if getattr(m, name) is not None]
        return sum(vals) / len(vals) if vals else None

    return Metrics(mean("precision"), mean("recall"), mean("f_measure"), mean("accuracy"))


def filter_sessions(sessions: Mapping[str, Sequence[Annotation]], policy: str) -> dict[str, Sequence[Annotation]]:
    """Select sessions by who talks.

    ``both_speakers`` keeps sessions where expert and user each have an
    utterance; ``expert_only`` keeps non-empty sessions without a user
    utterance; ``all`` keeps everything.
    """
    policy = policy.replace("-", "_")
    if policy == "both":
        policy = "both_speakers"
    if policy not in POLICIES:
        raise EvaluationError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    out = {}
    for name, anns in sessions.items():
        speakers = {a.speaker for a in anns}
        if policy == "all":
            keep = True
        elif policy == "both_speakers":
            keep = speakers == {"expert", "user"}
        else:
            keep = speakers == {"expert"}
        if keep:
            out[name] = anns
    return out


def write_report_json(path: str | Path, report: EvalReport) -> None:
    Path(path).write_text(json.dumps(report.to_json(), indent=2) + "\n")


def write_report_csv(path: str | Path, rows: Sequence[Mapping]) -> None:
    fields: list[str] = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
