"""Proactive intervention timing from lightweight egocentric video signals.

The pipeline: per-frame structural similarity between consecutive frames,
per-frame object counts and their deltas, an episode-based extrema detector
deciding when an assistant should speak up, and a windowed evaluator.
"""

from yeti.alignment import (
    AlignmentSeries,
    CountProviderSpec,
    CountSeries,
    compute_alignment,
    delta_histogram,
    load_counts,
)
from yeti.detector import (
    DetectorConfig,
    ExtremaRange,
    InterventionDetector,
    InterventionEvent,
    detect,
    detect_streaming,
)
from yeti.evaluation import (
    Annotation,
    EvalReport,
    MatchResult,
    compute_metrics,
    evaluate_session,
    filter_sessions,
    match_detections,
)
from yeti.frames import Frame, FrameSequence, SsimSeries, compute_ssim_series, load_frame_sequence, ssim
from yeti.synth import ScenarioSpec, SyntheticSession, generate, verify

__version__ = "0.1.0"

__all__ = [
    "AlignmentSeries",
    "Annotation",
    "CountProviderSpec",
    "CountSeries",
    "DetectorConfig",
    "EvalReport",
    "ExtremaRange",
    "Frame",
    "FrameSequence",
    "InterventionDetector",
    "InterventionEvent",
    "MatchResult",
    "ScenarioSpec",
    "SsimSeries",
    "SyntheticSession",
    "compute_alignment",
    "compute_metrics",
    "compute_ssim_series",
    "delta_histogram",
    "detect",
    "detect_streaming",
    "evaluate_session",
    "filter_sessions",
    "generate",
    "load_counts",
    "load_frame_sequence",
    "match_detections",
    "ssim",
    "verify",
]
