"""Grayscale frame sequences and whole-frame structural similarity."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

DYNAMIC_RANGE = 255
C1 = (0.01 * DYNAMIC_RANGE) ** 2
C2 = (0.03 * DYNAMIC_RANGE) ** 2

FRAME_SUFFIXES = (".pgm", ".png")
REC601 = np.array([0.299, 0.587, 0.114])


class FrameError(ValueError):
    """Raised for malformed frames or frame sequences."""


@dataclass(frozen=True, eq=False)
class Frame:
    """One 8-bit grayscale frame; ``index`` is seconds since video start."""

    index: int
    pixels: np.ndarray  # (height, width), uint8

    def __post_init__(self):
        if self.index < 0:
            raise FrameError(f"frame index must be non-negative, got {self.index}")
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.size == 0:
            raise FrameError(f"frame {self.index}: pixels must be a non-empty 2-D array")
        if px.dtype != np.uint8:
            if px.min() < 0 or px.max() > 255 or not np.all(px == np.round(px)):
                raise FrameError(f"frame {self.index}: pixels must be integers in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape


class FrameSequence(Sequence[Frame]):
    """Frames sampled at 1 FPS with consecutive indices 0..T-1 and one shared size."""

    def __init__(self, frames: Sequence[Frame] | Sequence[np.ndarray], names: Sequence[str] | None = None):
        items = [f if isinstance(f, Frame) else Frame(i, f) for i, f in enumerate(frames)]
        names = list(names) if names is not None else [f"frame {f.index}" for f in items]
        for i, f in enumerate(items):
            if f.index != i:
                raise FrameError(f"{names[i]}: expected frame index {i}, got {f.index}")
            if f.shape != items[0].shape:
                raise FrameError(
                    f"{names[i]}: size {f.width}x{f.height} differs from "
                    f"{items[0].width}x{items[0].height} of {names[0]}"
                )
        self._frames = tuple(items)

    def __len__(self) -> int:
        return len(self._frames)

    def __getitem__(self, i):
        return self._frames[i]

    def __iter__(self) -> Iterator[Frame]:
        return iter(self._frames)

    @property
    def shape(self) -> tuple[int, int] | None:
        return self._frames[0].shape if self._frames else None


@dataclass(frozen=True, eq=False)
class SsimSeries:
    """SSIM between each frame and its predecessor.

    ``values[j]`` belongs to frame ``j + 1``; use :meth:`at` to index by frame.
    """

    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def at(self, t: int) -> float:
        if not 1 <= t <= len(self.values):
            raise IndexError(f"frame {t} has no SSIM value (valid frames: 1..{len(self.values)})")
        return float(self.values[t - 1])

    @property
    def frame_indices(self) -> range:
        return range(1, len(self.values) + 1)


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Rec. 601 luma, rounded to the nearest integer."""
    luma = rgb[..., :3].astype(np.float64) @ REC601
    return np.clip(np.rint(luma), 0, 255).astype(np.uint8)


def read_frame_pixels(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if path.suffix.lower() == ".pgm":
                if im.format != "PPM" or im.mode != "L":
                    raise FrameError(f"{path.name}: expected a binary 8-bit graymap (P5, maxval 255)")
                return np.array(im, dtype=np.uint8)
            if im.mode == "L":
                return np.array(im, dtype=np.uint8)
            if im.mode in ("RGB", "RGBA"):
                return to_grayscale(np.array(im))
            if im.mode == "P":
                return to_grayscale(np.array(im.convert("RGB")))
            raise FrameError(f"{path.name}: unsupported image mode {im.mode}")
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FrameError(f"{path.name}: cannot decode image ({exc})") from exc


def write_pgm(path: str | Path, pixels: np.ndarray) -> None:
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="L").save(path, format="PPM")


def load_frame_sequence(path: str | Path) -> FrameSequence:
    """Load every ``.pgm``/``.png`` file in ``path``; filename order defines frame index."""
    root = Path(path)
    if not root.is_dir():
        raise FrameError(f"frame directory not found: {root}")
    files = sorted(p for p in root.iterdir() if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES)
    if len(files) < 2:
        raise FrameError(f"sequence too short: {len(files)} frame(s) in {root}, need at least 2")
    frames = []
    for i, p in enumerate(files):
        frames.append(Frame(i, read_frame_pixels(p)))
    return FrameSequence(frames, names=[p.name for p in files])


def ssim(a: Frame | np.ndarray, b: Frame | np.ndarray) -> float:
    """Single whole-frame SSIM from global means, variances and covariance.

    Population statistics in float64. Variance and covariance share one code
    path so that ssim(a, a) == 1 and ssim(a, b) == ssim(b, a) hold exactly.
    """
    x = a.pixels if isinstance(a, Frame) else np.asarray(a)
    y = b.pixels if isinstance(b, Frame) else np.asarray(b)
    if x.shape != y.shape:
        raise FrameError(f"dimension mismatch: {x.shape} vs {y.shape}")
    x = x.astype(np.float64).ravel()
    y = y.astype(np.float64).ravel()
    mu_x = x.mean()
    mu_y = y.mean()
    dx = x - mu_x
    dy = y - mu_y
    var_x = np.dot(dx, dx) / x.size
    var_y = np.dot(dy, dy) / y.size
    cov = np.dot(dx, dy) / x.size
    num = (2 * mu_x * mu_y + C1) * (2 * cov + C2)
    den = (mu_x * mu_x + mu_y * mu_y + C1) * (var_x + var_y + C2)
    return float(min(1.0, max(-1.0, num / den)))


def compute_ssim_series(seq: Sequence[Frame], workers: int = 1) -> SsimSeries:
    if len(seq) < 2:
        raise FrameError(f"sequence too short: {len(seq)} frame(s), need at least 2")
    pairs = [(seq[t - 1], seq[t]) for t in range(1, len(seq))]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(lambda p: ssim(*p), pairs))
    else:
        values = [ssim(a, b) for a, b in pairs]
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return SsimSeries(arr)


def write_ssim_csv(path: str | Path, series: SsimSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "ssim"])
        for t, v in zip(series.frame_indices, series.values):
            w.writerow([t, f"{v:.9g}"])


def read_ssim_csv(path: str | Path) -> SsimSeries:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:2] != ["frame_index", "ssim"]:
            raise FrameError(f"{path}: expected header frame_index,ssim")
        rows = [(int(r["frame_index"]), float(r["ssim"])) for r in reader]
    for expected, (t, _) in enumerate(rows, start=1):
        if t != expected:
            raise FrameError(f"{path}: expected frame {expected}, found {t}")
    return SsimSeries(np.array([v for _, v in rows], dtype=np.float64))
