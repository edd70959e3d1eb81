import csv
import json

import numpy as np
import pytest

from yeti.cli import main
from yeti.frames import write_pgm


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def tree_bytes(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def session_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "session"
    assert main(["synth", str(root), "--seed", "1", "--duration", "300", "--interventions", "8"]) == 0
    return root


def test_synth_then_verify(session_dir, capsys):
    assert main(["verify", str(session_dir)]) == 0
    assert "0 failure(s)" in capsys.readouterr().out
    assert len(list((session_dir / "frames").glob("*.pgm"))) == 300


def test_verify_reports_tampering(tmp_path, capsys):
    main(["synth", str(tmp_path / "s"), "--seed", "4", "--duration", "60", "--interventions", "2"])
    counts = tmp_path / "s" / "counts.csv"
    lines = counts.read_text().splitlines()
    idx, val = lines[6].split(",")
    lines[6] = f"{idx},{int(val) + 1}"
    counts.write_text("\n".join(lines) + "\n")
    assert main(["verify", str(tmp_path / "s")]) == 1
    assert f"FAIL frame {idx}: count expected {int(val) + 1}" in capsys.readouterr().out


def test_synth_infeasible(tmp_path, capsys):
    assert main(["synth", str(tmp_path / "x"), "--duration", "30", "--interventions", "10"]) == 1
    assert "infeasible" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_synth_same_seed_same_bytes(tmp_path):
    for name in ("a", "b"):
        main(["synth", str(tmp_path / name), "--seed", "7", "--duration", "60", "--interventions", "3"])
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_ssim_three_frames(tmp_path):
    d = tmp_path / "f"
    d.mkdir()
    rng = np.random.default_rng(0)
    for i in range(3):
        write_pgm(d / f"frame_{i:05d}.pgm", rng.integers(0, 256, (8, 8), dtype=np.uint8))
    assert main(["ssim", str(d), "-o", str(tmp_path / "s.csv")]) == 0
    out = rows(tmp_path / "s.csv")
    assert [r["frame_index"] for r in out] == ["1", "2"]
    assert all(-1 <= float(r["ssim"]) <= 1 for r in out)


def test_ssim_identical_frames(tmp_path):
    d = tmp_path / "f"
    d.mkdir()
    for i in range(4):
        write_pgm(d / f"frame_{i:05d}.pgm", np.full((8, 8), 77, np.uint8))
    main(["ssim", str(d), "-o", str(tmp_path / "s.csv")])
    assert [float(r["ssim"]) for r in rows(tmp_path / "s.csv")] == [1.0, 1.0, 1.0]


def test_ssim_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["ssim", str(tmp_path / "empty"), "-o", str(tmp_path / "s.csv")]) != 0
    assert "sequence too short" in capsys.readouterr().err


def test_detect_and_eval_on_session(session_dir, tmp_path, capsys):
    out = tmp_path / "det"
    assert main(["detect", "--frames", str(session_dir / "frames"), "--counts", str(session_dir / "counts.csv"),
                 "-o", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"detections.csv", "detections.json", "trace.csv"}
    assert main(["eval", str(out / "detections.json"), str(session_dir / "annotations.jsonl"),
                 "-o", str(tmp_path / "ev")]) == 0
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert report["metrics"]["recall"] >= 0.8
    assert "R=1.0000" in capsys.readouterr().out


def test_detect_tau_zero_warns(session_dir, tmp_path, caplog):
    out = tmp_path / "det"
    assert main(["detect", "--frames", str(session_dir / "frames"), "--counts", str(session_dir / "counts.csv"),
                 "--tau", "0", "-o", str(out)]) == 0
    assert (out / "detections.csv").read_text() == "frame_index,episode,trigger,delta\n"
    assert "nothing can be detected" in caplog.text


def test_global_and_local_agree_until_first_recompute(session_dir, tmp_path):
    traces = {}
    for variant in ("global", "local"):
        out = tmp_path / variant
        main(["detect", "--frames", str(session_dir / "frames"), "--counts", str(session_dir / "counts.csv"),
              "--variant", variant, "-o", str(out)])
        traces[variant] = rows(out / "trace.csv")
    g, loc = traces["global"], traces["local"]
    assert len(g) == len(loc) == 299
    # episode 1 ends on the 2k-th eligible frame; nothing can differ before then
    eligible = [i for i, r in enumerate(g) if r["eligible"] == "1"]
    first_recompute = eligible[2 * 5 - 1]
    assert g[: first_recompute + 1] == loc[: first_recompute + 1]


def test_detect_from_precomputed_csvs_matches(session_dir, tmp_path):
    main(["ssim", str(session_dir / "frames"), "-o", str(tmp_path / "ssim.csv")])
    main(["align", str(session_dir / "counts.csv"), "-o", str(tmp_path / "align.csv")])
    main(["detect", "--ssim", str(tmp_path / "ssim.csv"), "--alignment", str(tmp_path / "align.csv"),
          "-o", str(tmp_path / "a")])
    main(["detect", "--frames", str(session_dir / "frames"), "--counts", str(session_dir / "counts.csv"),
          "-o", str(tmp_path / "b")])
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_detect_twice_is_byte_identical(session_dir, tmp_path):
    for name in ("a", "b"):
        main(["detect", "--frames", str(session_dir / "frames"), "--counts", str(session_dir / "counts.csv"),
              "--variant", "local", "-o", str(tmp_path / name)])
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_detect_needs_inputs(tmp_path, capsys):
    assert main(["detect", "-o", str(tmp_path / "x")]) == 1
    assert "--frames or --ssim" in capsys.readouterr().err


def _write_dets(path, frames):
    path.write_text("frame_index,episode,trigger,delta\n" + "".join(f"{f},0,extrema,1\n" for f in frames))


def _write_anns(path, starts):
    path.write_text("".join(json.dumps({"start_s": s, "end_s": s + 2, "speaker": "expert",
                                        "type": "confirm_action", "proactive": True}) + "\n" for s in starts))


def test_eval_perfect(tmp_path, capsys):
    _write_dets(tmp_path / "d.csv", [10, 50, 90])
    _write_anns(tmp_path / "a.jsonl", [10, 50, 90])
    assert main(["eval", str(tmp_path / "d.csv"), str(tmp_path / "a.jsonl"), "-o", str(tmp_path / "r")]) == 0
    assert "P=1.0000 R=1.0000 F=1.0000" in capsys.readouterr().out


def test_eval_hand_example(tmp_path):
    _write_dets(tmp_path / "d.csv", [10, 40])
    _write_anns(tmp_path / "a.jsonl", [12, 100])
    main(["eval", str(tmp_path / "d.csv"), str(tmp_path / "a.jsonl"), "--window-s", "5", "-o", str(tmp_path / "r")])
    (row,) = rows(tmp_path / "r" / "report.csv")
    assert (row["precision"], row["recall"], row["f_measure"]) == ("0.5000", "0.5000", "0.5000")
    assert (row["tp"], row["fp"], row["fn"]) == ("1", "1", "1")


def test_eval_empty_detections(tmp_path, capsys):
    _write_dets(tmp_path / "d.csv", [])
    _write_anns(tmp_path / "a.jsonl", [10, 50])
    main(["eval", str(tmp_path / "d.csv"), str(tmp_path / "a.jsonl"), "--n-frames", "60", "-o", str(tmp_path / "r")])
    out = capsys.readouterr().out
    assert "P=n/a R=0.0000 F=n/a" in out


def test_eval_policy_excludes_session(tmp_path, caplog):
    _write_dets(tmp_path / "d.csv", [10])
    _write_anns(tmp_path / "a.jsonl", [10])
    main(["eval", str(tmp_path / "d.csv"), str(tmp_path / "a.jsonl"), "--policy", "both",
          "-o", str(tmp_path / "r")])
    assert "excluded" in caplog.text
    assert json.loads((tmp_path / "r" / "report.json").read_text())["sessions"] == 0


def test_counts_constant_and_align(tmp_path, session_dir):
    assert main(["counts", str(session_dir / "frames"), "--provider", "constant", "--source", "2",
                 "-o", str(tmp_path / "c.csv")]) == 0
    assert {r["count"] for r in rows(tmp_path / "c.csv")} == {"2"}
    assert main(["align", str(tmp_path / "c.csv"), "-o", str(tmp_path / "a.csv"),
                 "--histogram", str(tmp_path / "h.csv"), "--figures"]) == 0
    assert rows(tmp_path / "h.csv") == [{"delta": "0", "occurrences": "299"}]
    assert (tmp_path / "h.png").read_bytes()[:4] == b"\x89PNG"


def test_counts_remote(tmp_path):
    from test_alignment import _CountServer

    d = tmp_path / "f"
    d.mkdir()
    for i, v in enumerate([5, 5, 8]):
        write_pgm(d / f"frame_{i:05d}.pgm", np.full((4, 4), v, np.uint8))
    with _CountServer() as srv:
        assert main(["counts", str(d), "--source", srv.url, "-o", str(tmp_path / "c.csv")]) == 0
    assert [r["count"] for r in rows(tmp_path / "c.csv")] == ["5", "5", "8"]


def test_figures(session_dir, tmp_path):
    out = tmp_path / "det"
    main(["detect", "--frames", str(session_dir / "frames"), "--counts", str(session_dir / "counts.csv"),
          "--annotations", str(session_dir / "annotations.jsonl"), "--figures", "-o", str(out)])
    assert (out / "trace.png").read_bytes()[:4] == b"\x89PNG"


def test_sweep_cli(session_dir, tmp_path):
    assert main(["sweep", str(session_dir), "--taus", "0.6,0.9", "--conv-intervals", "1",
                 "--extrema-ranges", "0,1,2", "--variants", "global", "--figures", "-o", str(tmp_path / "sw")]) == 0
    out = rows(tmp_path / "sw" / "sweep.csv")
    assert len(out) == 6
    assert [(r["tau"], r["extrema_range"]) for r in out[:3]] == [("0.6", "0"), ("0.6", "1"), ("0.6", "2")]
    assert {p.name for p in (tmp_path / "sw").glob("*.png")} == {"sweep_tau.png", "sweep_extrema_range.png"}


def test_sweep_bad_list(session_dir, tmp_path):
    with pytest.raises(SystemExit):
        main(["sweep", str(session_dir), "--taus", "a,b", "-o", str(tmp_path / "sw")])
