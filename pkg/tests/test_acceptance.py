"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line in the summary."""

import time

import numpy as np
import pytest

from reference_detector import random_instance, reference_detect
from yeti.alignment import compute_alignment, delta_histogram, write_alignment_csv
from yeti.detector import DetectorConfig, detect, detect_streaming, detect_trace
from yeti.evaluation import Annotation, MatchResult, compute_metrics, evaluate_session, match_detections
from yeti.frames import compute_ssim_series, ssim, write_ssim_csv
from yeti.sweep import SweepGrid, load_session_signals, run_sweep
from yeti.synth import ScenarioSpec, generate, write_session

from conftest import COOPERATIVE


def as_tuples(events):
    return [(e.frame_index, e.episode_index, e.trigger, e.delta_at_trigger) for e in events]


@pytest.fixture(scope="module")
def detector_corpus():
    rng = np.random.default_rng(20240601)
    return [random_instance(rng) for _ in range(1000)]


def test_ssim_suite(criterion):
    with criterion(1, "SSIM identity, symmetry, range over 10,000 frames; black/white value; < 5 s"):
        start = time.perf_counter()
        rng = np.random.default_rng(1)
        frames = rng.integers(0, 256, (10_000, 8, 8), dtype=np.uint8)
        for i in range(0, 10_000, 2):
            a, b = frames[i], frames[i + 1]
            assert abs(ssim(a, a) - 1.0) <= 1e-9
            assert abs(ssim(b, b) - 1.0) <= 1e-9
            ab = ssim(a, b)
            assert abs(ab - ssim(b, a)) <= 1e-12
            assert -1.0 <= ab <= 1.0
        black, white = np.zeros((8, 8), np.uint8), np.full((8, 8), 255, np.uint8)
        assert ssim(black, white) == pytest.approx(9.99908e-5, abs=1e-8)
        assert time.perf_counter() - start < 5.0


def test_alignment_suite(criterion):
    with criterion(2, "alignment telescoping and shift invariance over 1,000 series; worked example; < 1 s"):
        start = time.perf_counter()
        rng = np.random.default_rng(2)
        for _ in range(1000):
            counts = rng.integers(0, 50, int(rng.integers(2, 200)))
            d = compute_alignment(counts).deltas
            assert int(d.sum()) == int(counts[-1] - counts[0])
            assert np.array_equal(np.cumsum(d), counts[1:] - counts[0])
            shift = int(rng.integers(0, 1000))
            assert np.array_equal(compute_alignment(counts + shift).deltas, d)
        assert compute_alignment([3, 3, 4, 4, 2]).deltas.tolist() == [0, 1, 0, -2]
        assert time.perf_counter() - start < 1.0


def test_detector_oracle_equivalence(criterion, detector_corpus):
    with criterion(3, "streaming == batch == brute-force reference on 1,000 random instances; < 30 s"):
        start = time.perf_counter()
        mismatches = 0
        for ssim_v, deltas, p in detector_corpus:
            cfg = DetectorConfig(p["tau"], p["m"], p["r"], p["k"], p["variant"])
            batch = as_tuples(detect(ssim_v, deltas, cfg))
            stream = as_tuples(detect_streaming(zip(range(1, len(ssim_v) + 1), ssim_v, deltas), cfg))
            ref = reference_detect(ssim_v, deltas, p["tau"], p["m"], p["r"], p["k"], p["variant"])
            mismatches += not (batch == stream == ref)
        assert {p["variant"] for _, _, p in detector_corpus} == {"global", "local"}
        assert mismatches == 0
        assert time.perf_counter() - start < 30.0


def test_detector_structural_properties(criterion, detector_corpus):
    with criterion(4, "one event per episode, gap >= m+1, only eligible frames, fixed global range"):
        violations = 0
        for ssim_v, deltas, p in detector_corpus:
            cfg = DetectorConfig(p["tau"], p["m"], p["r"], p["k"], p["variant"])
            steps = detect_trace(ssim_v, deltas, cfg)
            events = [s.event for s in steps if s.event is not None]
            frames = [e.frame_index for e in events]
            episodes = [e.episode_index for e in events]
            violations += len(episodes) != len(set(episodes))
            violations += sum(b - a < p["m"] + 1 for a, b in zip(frames, frames[1:]))
            violations += sum(not ssim_v[f - 1] < p["tau"] for f in frames)
            if p["variant"] == "global":
                violations += len({s.active_range for s in steps if s.active_range is not None}) > 1
        assert violations == 0


def test_hand_trace(criterion):
    with criterion(5, "seven-delta example fires at frames {3, 6}"):
        cfg = DetectorConfig(tau=0.9, conversation_interval_m=1, extrema_range_r=0, episode_interval_k=3,
                             variant="global")
        events = detect([0.1] * 7, [0, 1, 0, 0, -1, 1, 0], cfg)
        assert {e.frame_index for e in events} == {3, 6}


def test_end_to_end_synthetic_recall(criterion):
    with criterion(6, "cooperative synthetic session recall >= 0.8; perfect detections score 1.0; < 20 s"):
        start = time.perf_counter()
        session = generate(COOPERATIVE)
        bursts = session.manifest["bursts"]
        cfg = DetectorConfig()
        assert all(b - a > cfg.episode_interval_k + cfg.conversation_interval_m for a, b in zip(bursts, bursts[1:]))
        events = detect(compute_ssim_series(session.frames), compute_alignment(session.counts), cfg)
        report = evaluate_session([e.frame_index for e in events], session.annotations, window_s=5.0,
                                  n_frames=len(session.frames))
        assert report.metrics.recall >= 0.8
        perfect = evaluate_session(bursts, session.annotations, n_frames=len(session.frames))
        assert (perfect.metrics.precision, perfect.metrics.recall, perfect.metrics.f_measure) == (1.0, 1.0, 1.0)
        assert time.perf_counter() - start < 20.0


def test_delta_histogram_skew(criterion):
    with criterion(7, "idle-heavy session puts >= 70% of delta mass at zero"):
        session = generate(ScenarioSpec(seed=7, duration_s=300, idle_fraction=0.8, n_interventions=8))
        hist = delta_histogram(compute_alignment(session.counts))
        assert hist.get(0, 0) / sum(hist.values()) >= 0.7


def test_evaluation_arithmetic(criterion):
    with criterion(8, "worked matching example gives 0.5/0.5/0.5; F is harmonic; 0/0 prints n/a"):
        m = compute_metrics(match_detections([10, 40], [12, 100], 5))
        assert (m.precision, m.recall, m.f_measure) == (0.5, 0.5, 0.5)
        rng = np.random.default_rng(8)
        for tp, fp, fn, tn in rng.integers(0, 500, (1000, 4)):
            met = compute_metrics(MatchResult(int(tp), int(fp), int(fn), int(tn)))
            p, r = met.precision, met.recall
            if p is not None and r is not None and p + r > 0:
                assert met.f_measure == pytest.approx(2 * p * r / (p + r), rel=1e-12)
        empty = evaluate_session([], [], n_frames=10).metrics.formatted()
        assert empty["precision"] == "n/a" and empty["recall"] == "n/a" and empty["f_measure"] == "n/a"
        no_dets = evaluate_session([], [Annotation(3, 5, "expert", "confirm_action", True)], n_frames=10)
        assert no_dets.metrics.formatted()["precision"] == "n/a"


def test_lightweight_features(criterion, tmp_path):
    with criterion(9, "SSIM and delta CSVs for a 3600-frame session stay under 100 KB"):
        session = generate(ScenarioSpec(seed=9, duration_s=3600, idle_fraction=0.8, n_interventions=60))
        write_ssim_csv(tmp_path / "ssim.csv", compute_ssim_series(session.frames))
        write_alignment_csv(tmp_path / "alignment.csv", compute_alignment(session.counts))
        total = (tmp_path / "ssim.csv").stat().st_size + (tmp_path / "alignment.csv").stat().st_size
        assert total < 100 * 1024


def test_full_sweep(criterion, tmp_path):
    with criterion(10, "150-point sweep on one 300 s session in < 2 min, one row per point"):
        start = time.perf_counter()
        write_session(generate(COOPERATIVE), tmp_path / "session")
        rows = run_sweep([load_session_signals(tmp_path / "session")], SweepGrid())
        assert len(rows) == 150
        keys = {(r["variant"], r["tau"], r["conv_interval"], r["extrema_range"]) for r in rows}
        assert len(keys) == 150
        assert time.perf_counter() - start < 120.0
