"""Command-line entry point: ``yeti <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from yeti import alignment, detector, evaluation, frames, plots, synth
from yeti.sweep import SweepGrid, load_session_signals, run_sweep

log = logging.getLogger("yeti")


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated {kind.__name__} values, got {text!r}")
    return parse


def _policy(text: str) -> str:
    norm = text.replace("-", "_")
    return {"both": "both_speakers", "expert_only": "expert_only", "all": "all",
            "both_speakers": "both_speakers"}.get(norm, norm)


def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    d = detector.DetectorConfig()
    p.add_argument("--tau", type=float, default=d.tau, help="SSIM threshold; frames at or above it are ignored")
    p.add_argument("--conv-interval", type=int, default=d.conversation_interval_m,
                   help="seconds of silence after each intervention")
    p.add_argument("--extrema-range", type=int, default=d.extrema_range_r, help="tolerance around min/max delta")
    p.add_argument("--episode-interval", type=int, default=d.episode_interval_k, help="eligible frames per episode")
    p.add_argument("--variant", choices=detector.VARIANTS, default=d.variant)
    p.add_argument("--allow-multiple-per-episode", action="store_true",
                   help="let every in-range frame fire, not only the first of each episode")


def _config(args) -> detector.DetectorConfig:
    return detector.DetectorConfig(
        tau=args.tau,
        conversation_interval_m=args.conv_interval,
        extrema_range_r=args.extrema_range,
        episode_interval_k=args.episode_interval,
        variant=args.variant,
        allow_multiple_per_episode=args.allow_multiple_per_episode,
    )


def _provider(args) -> alignment.CountProviderSpec:
    source = args.source
    if args.provider == "constant":
        source = int(source if source is not None else 0)
    return alignment.CountProviderSpec(args.provider, source, timeout=args.timeout)


def cmd_ssim(args) -> int:
    seq = frames.load_frame_sequence(args.frames_dir)
    series = frames.compute_ssim_series(seq, workers=args.workers)
    frames.write_ssim_csv(args.out, series)
    return 0


def cmd_counts(args) -> int:
    seq = frames.load_frame_sequence(args.frames_dir)
    counts = alignment.provide_counts(_provider(args), seq, workers=args.workers)
    alignment.write_counts_csv(args.out, counts)
    return 0


def cmd_align(args) -> int:
    counts = _read_counts_any(args.counts)
    series = alignment.compute_alignment(counts)
    alignment.write_alignment_csv(args.out, series)
    if args.histogram:
        hist = alignment.delta_histogram(series)
        alignment.write_histogram_csv(args.histogram, hist)
        if args.figures:
            plots.plot_histogram(hist, Path(args.histogram).with_suffix(".png"))
    return 0


def _read_counts_any(path) -> alignment.CountSeries:
    # length is whatever the file holds; gaps are still rejected
    with open(path, newline="") as fh:
        n = sum(1 for row in csv.reader(fh) if row and "".join(row).strip()) - 1
    return alignment.load_counts(path, max(n, 0))


def cmd_detect(args) -> int:
    cfg = _config(args)
    seq = None
    if args.ssim:
        ssim_series = frames.read_ssim_csv(args.ssim)
    elif args.frames:
        seq = frames.load_frame_sequence(args.frames)
        ssim_series = frames.compute_ssim_series(seq, workers=args.workers)
    else:
        raise detector.DetectorError("need --frames or --ssim")
    n_frames = len(ssim_series) + 1

    if args.alignment:
        align = alignment.read_alignment_csv(args.alignment)
    elif args.counts:
        align = alignment.compute_alignment(alignment.load_counts(args.counts, n_frames))
    elif args.provider in ("constant", "remote"):
        if args.provider == "remote" and seq is None:
            raise alignment.CountError("the remote provider needs --frames")
        target = seq if seq is not None else [None] * n_frames
        align = alignment.compute_alignment(alignment.provide_counts(_provider(args), target, args.workers))
    else:
        raise detector.DetectorError("need --counts, --alignment or --provider constant|remote")

    steps = detector.detect_trace(ssim_series, align, cfg)
    events = [s.event for s in steps if s.event is not None]
    if not any(s.eligible for s in steps):
        log.warning("no frame has SSIM below tau=%g; nothing can be detected", cfg.tau)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    detector.write_detections_csv(out / "detections.csv", events)
    detector.write_detections_json(out / "detections.json", events, cfg, n_frames=n_frames)
    detector.write_trace_csv(out / "trace.csv", steps)
    if args.figures:
        truths = []
        if args.annotations:
            truths = evaluation.truths_for(evaluation.read_annotations(args.annotations), "interaction")
        plots.plot_trace(steps, out / "trace.png", tau=cfg.tau, truths=truths)
    print(f"{len(events)} intervention(s) over {n_frames} frames -> {out}")
    return 0


def cmd_eval(args) -> int:
    dets, n_frames = detector.read_detections(args.detections)
    if args.n_frames is not None:
        n_frames = args.n_frames
    anns = evaluation.read_annotations(args.annotations)
    kept = evaluation.filter_sessions({"session": anns}, args.policy)
    sessions = [(dets, anns, n_frames)] if kept else []
    if not sessions:
        log.warning("session excluded by the %s policy", args.policy)
    report = evaluation.evaluate_sessions(sessions, args.mode, args.class_filter, args.window_s,
                                          averaging=args.averaging, policy=args.policy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_report_json(out / "report.json", report)
    evaluation.write_report_csv(out / "report.csv", [report.flat_row()])
    m = report.metrics.formatted()
    print(f"P={m['precision']} R={m['recall']} F={m['f_measure']} Acc={m['accuracy']} "
          f"(tp={report.counts.tp} fp={report.counts.fp} fn={report.counts.fn})")
    return 0


def cmd_sweep(args) -> int:
    grid = SweepGrid(args.taus, args.conv_intervals, args.extrema_ranges, args.episode_intervals, args.variants)
    sessions = [load_session_signals(p, workers=args.workers) for p in args.sessions]
    rows = run_sweep(sessions, grid, mode=args.mode, window_s=args.window_s, policy=args.policy,
                     averaging=args.averaging, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_report_csv(out / "sweep.csv", rows)
    if args.figures:
        for param, values in (("tau", args.taus), ("conv_interval", args.conv_intervals),
                              ("extrema_range", args.extrema_ranges), ("episode_interval", args.episode_intervals)):
            if len(values) > 1:
                plots.plot_sweep(rows, out / f"sweep_{param}.png", param)
    print(f"{len(rows)} grid point(s) -> {out / 'sweep.csv'}")
    return 0


def cmd_synth(args) -> int:
    spec = synth.ScenarioSpec(
        seed=args.seed,
        duration_s=args.duration,
        idle_fraction=args.idle_fraction,
        n_interventions=args.interventions,
        frame_size=(args.width, args.height),
        object_size_px=args.object_size,
        cooperative=not args.non_cooperative,
        max_burst=args.max_burst,
    )
    session = synth.generate(spec, workers=args.workers)
    synth.write_session(session, args.out_dir)
    print(f"{len(session.frames)} frames, {len(session.annotations)} planted intervention(s) -> {args.out_dir}")
    return 0


def cmd_verify(args) -> int:
    rep = synth.verify(synth.read_session(args.session_dir))
    for f in rep.failures:
        print(f"FAIL {f}")
    print(f"{rep.checked} checks, {len(rep.failures)} failure(s)")
    return 0 if rep.ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="yeti", description="Proactive intervention detection from frame signals.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ssim", help="SSIM between consecutive frames")
    p.add_argument("frames_dir")
    p.add_argument("-o", "--out", required=True, help="output CSV (frame_index,ssim)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_ssim)

    p = sub.add_parser("counts", help="per-frame object counts from a provider")
    p.add_argument("frames_dir")
    p.add_argument("--provider", choices=("file", "constant", "remote"), default="remote")
    p.add_argument("--source", help="CSV path, constant value, or endpoint URL (default $YETI_REMOTE_ENDPOINT)")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("-o", "--out", required=True, help="output CSV (frame_index,count)")
    p.set_defaults(func=cmd_counts)

    p = sub.add_parser("align", help="count deltas and their histogram")
    p.add_argument("counts")
    p.add_argument("-o", "--out", required=True, help="output CSV (frame_index,delta)")
    p.add_argument("--histogram", help="also write delta,occurrences CSV here")
    p.add_argument("--figures", action="store_true", help="render the histogram next to its CSV")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("detect", help="run the intervention detector")
    p.add_argument("--frames", help="frame directory")
    p.add_argument("--ssim", help="precomputed SSIM CSV instead of --frames")
    p.add_argument("--counts", help="counts CSV (frame_index,count)")
    p.add_argument("--alignment", help="precomputed delta CSV instead of --counts")
    p.add_argument("--provider", choices=("file", "constant", "remote"), default="file")
    p.add_argument("--source")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--annotations", help="annotations to overlay on the trace figure")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--figures", action="store_true", help="render trace.png")
    p.add_argument("-o", "--out", required=True, help="output directory")
    _add_detector_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score detections against annotations")
    p.add_argument("detections", help="detections CSV or JSON")
    p.add_argument("annotations", help="annotations JSON Lines")
    p.add_argument("--mode", choices=evaluation.MODES, default="intervention")
    p.add_argument("--policy", type=_policy, default="all", help="all, both, or expert-only")
    p.add_argument("--window-s", type=float, default=evaluation.DEFAULT_WINDOW_S)
    p.add_argument("--class", dest="class_filter", help="restrict ground truth to one class")
    p.add_argument("--n-frames", type=int, help="session length in frames (for TN / accuracy)")
    p.add_argument("--averaging", choices=("micro", "macro"), default="micro")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate a hyperparameter grid")
    p.add_argument("sessions", nargs="+", help="session directories")
    p.add_argument("--taus", type=_csv_list(float), default=list(DEFAULT_GRID.taus))
    p.add_argument("--conv-intervals", type=_csv_list(int), default=list(DEFAULT_GRID.conv_intervals))
    p.add_argument("--extrema-ranges", type=_csv_list(int), default=list(DEFAULT_GRID.extrema_ranges))
    p.add_argument("--episode-intervals", type=_csv_list(int), default=list(DEFAULT_GRID.episode_intervals))
    p.add_argument("--variants", type=_csv_list(str), default=list(DEFAULT_GRID.variants))
    p.add_argument("--mode", choices=evaluation.MODES, default="intervention")
    p.add_argument("--policy", type=_policy, default="all")
    p.add_argument("--window-s", type=float, default=evaluation.DEFAULT_WINDOW_S)
    p.add_argument("--averaging", choices=("micro", "macro"), default="micro")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--figures", action="store_true", help="render one plot per swept parameter")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate a synthetic session")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=int, default=300)
    p.add_argument("--idle-fraction", type=float, default=0.8)
    p.add_argument("--interventions", type=int, default=8)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--object-size", type=int, default=8)
    p.add_argument("--max-burst", type=int, default=1)
    p.add_argument("--non-cooperative", action="store_true", help="add count changes outside planted bursts")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="re-check a synthetic session directory")
    p.add_argument("session_dir")
    p.set_defaults(func=cmd_verify)
    return ap


DEFAULT_GRID = SweepGrid()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
