"""Object-count signal and its frame-to-frame delta (the alignment signal)."""

from __future__ import annotations

import base64
import csv
import io
import json
import logging
import os
import re
import urllib.error
import urllib.request
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from yeti.frames import Frame

log = logging.getLogger(__name__)

COUNT_PROMPT = "The number of objects in this image is"
ENDPOINT_ENV = "YETI_REMOTE_ENDPOINT"
COUNT_WARN_THRESHOLD = 1000

_INT_TOKEN = re.compile(r"[+-]?\d+")


class CountError(ValueError):
    """Bad count data or a failed count provider."""


@dataclass(frozen=True, eq=False)
class CountSeries:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 1:
            raise CountError("counts must be one-dimensional")
        neg = np.flatnonzero(c < 0)
        if neg.size:
            raise CountError(f"negative count at frame {neg[0]}: {c[neg[0]]}")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    def __len__(self) -> int:
        return len(self.counts)


@dataclass(frozen=True, eq=False)
class AlignmentSeries:
    """``deltas[j]`` is C[j+1] - C[j] and belongs to frame ``j + 1``."""

    deltas: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.deltas, dtype=np.int64)
        d.setflags(write=False)
        object.__setattr__(self, "deltas", d)

    def __len__(self) -> int:
        return len(self.deltas)

    def at(self, t: int) -> int:
        if not 1 <= t <= len(self.deltas):
            raise IndexError(f"frame {t} has no delta (valid frames: 1..{len(self.deltas)})")
        return int(self.deltas[t - 1])

    @property
    def frame_indices(self) -> range:
        return range(1, len(self.deltas) + 1)


@dataclass(frozen=True)
class CountProviderSpec:
    """Where counts come from.

    ``source`` is a CSV path for ``file``, an integer for ``constant`` and an
    HTTP endpoint URL for ``remote`` (``None`` falls back to $YETI_REMOTE_ENDPOINT).
    """

    kind: str
    source: str | int | Path | None = None
    prompt: str = COUNT_PROMPT
    timeout: float = 10.0

    def __post_init__(self):
        if self.kind not in ("file", "constant", "remote"):
            raise CountError(f"unknown provider kind {self.kind!r}")
        if not self.prompt:
            raise CountError("prompt must be non-empty")
        if self.timeout <= 0:
            raise CountError("timeout must be positive")


def load_counts(spec: CountProviderSpec | str | Path, expected_length: int) -> CountSeries:
    """Read a ``frame_index,count`` CSV holding one row per frame 0..expected_length-1."""
    path = Path(spec.source if isinstance(spec, CountProviderSpec) else spec)
    if not path.is_file():
        raise CountError(f"counts file not found: {path}")
    seen: dict[int, int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["frame_index", "count"]:
            raise CountError(f"{path}: expected header frame_index,count")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                idx, cnt = int(row[0]), int(row[1])
            except (ValueError, IndexError):
                raise CountError(f"{path}:{lineno}: malformed row {row!r}") from None
            if cnt < 0:
                raise CountError(f"{path}:{lineno}: negative count {cnt} at frame {idx}")
            if idx in seen:
                raise CountError(f"{path}:{lineno}: duplicate frame {idx}")
            if not 0 <= idx < expected_length:
                raise CountError(
                    f"{path}:{lineno}: frame {idx} outside expected range 0..{expected_length - 1} "
                    "(length mismatch)"
                )
            seen[idx] = cnt
    for i in range(expected_length):
        if i not in seen:
            raise CountError(f"{path}: missing frame {i}")
    return CountSeries(np.array([seen[i] for i in range(expected_length)], dtype=np.int64))


def write_counts_csv(path: str | Path, counts: CountSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "count"])
        w.writerows(enumerate(counts.counts.tolist()))


def parse_count(completion: str) -> int:
    """First base-10 integer token in a model completion."""
    m = _INT_TOKEN.search(completion)
    if m is None:
        raise CountError(f"no integer in completion: {completion!r}")
    value = int(m.group())
    if value < 0:
        raise CountError(f"negative count in completion: {completion!r}")
    return value


def encode_png(frame: Frame | np.ndarray) -> bytes:
    pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def resolve_endpoint(spec: CountProviderSpec) -> str:
    endpoint = spec.source if spec.source is not None else os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise CountError(f"remote provider needs an endpoint (set {ENDPOINT_ENV})")
    return str(endpoint)


def query_remote_count(spec: CountProviderSpec, frame: Frame | np.ndarray) -> int:
    """POST ``{"image": <base64 PNG>, "prompt": ...}`` as JSON, expect ``{"completion": ...}`` back."""
    body = json.dumps(
        {"image": base64.b64encode(encode_png(frame)).decode("ascii"), "prompt": spec.prompt}
    ).encode("utf-8")
    req = urllib.request.Request(
        resolve_endpoint(spec), data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(req, timeout=spec.timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
    except TimeoutError as exc:
        raise CountError(f"count request timed out after {spec.timeout} s") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, TimeoutError):
            raise CountError(f"count request timed out after {spec.timeout} s") from exc
        raise CountError(f"count request failed: {exc.reason}") from exc
    except (OSError, ValueError) as exc:
        raise CountError(f"count request failed: {exc}") from exc
    if not isinstance(payload, dict) or not isinstance(payload.get("completion"), str):
        raise CountError("count response lacks a text 'completion' field")
    return parse_count(payload["completion"])


def provide_counts(spec: CountProviderSpec, frames: Sequence[Frame], workers: int = 4) -> CountSeries:
    """Counts for every frame from whichever provider ``spec`` names."""
    n = len(frames)
    if spec.kind == "file":
        series = load_counts(spec, n)
    elif spec.kind == "constant":
        try:
            value = int(spec.source)
        except (TypeError, ValueError):
            raise CountError(f"constant provider needs an integer source, got {spec.source!r}") from None
        series = CountSeries(np.full(n, value, dtype=np.int64))
    else:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            values = list(pool.map(lambda f: query_remote_count(spec, f), frames))
        series = CountSeries(np.array(values, dtype=np.int64))
    big = np.flatnonzero(series.counts > COUNT_WARN_THRESHOLD)
    if big.size:
        log.warning("count above %d at frame %d (%d); possibly a parse error",
                    COUNT_WARN_THRESHOLD, big[0], series.counts[big[0]])
    return series


def compute_alignment(counts: CountSeries | Sequence[int]) -> AlignmentSeries:
    c = counts.counts if isinstance(counts, CountSeries) else np.asarray(counts, dtype=np.int64)
    if len(c) < 2:
        raise CountError(f"series too short: {len(c)} count(s), need at least 2")
    return AlignmentSeries(np.diff(c))


def delta_histogram(deltas: AlignmentSeries | Sequence[int]) -> dict[int, int]:
    d = deltas.deltas if isinstance(deltas, AlignmentSeries) else deltas
    return dict(sorted(Counter(int(x) for x in d).items()))


def write_alignment_csv(path: str | Path, alignment: AlignmentSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "delta"])
        w.writerows(zip(alignment.frame_indices, alignment.deltas.tolist()))


def read_alignment_csv(path: str | Path) -> AlignmentSeries:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:2] != ["frame_index", "delta"]:
            raise CountError(f"{path}: expected header frame_index,delta")
        rows = [(int(r["frame_index"]), int(r["delta"])) for r in reader]
    for expected, (t, _) in enumerate(rows, start=1):
        if t != expected:
            raise CountError(f"{path}: expected frame {expected}, found {t}")
    return AlignmentSeries(np.array([d for _, d in rows], dtype=np.int64))


def write_histogram_csv(path: str | Path, hist: dict[int, int]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "occurrences"])
        w.writerows(sorted(hist.items()))
