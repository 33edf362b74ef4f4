"""Shared domain types, map file IO and fixation rasterization.

Saliency maps and distributions are plain 2-D ``float64`` numpy arrays;
:func:`check_map` and :func:`check_distribution` enforce their invariants.
"""

from __future__ import annotations

import csv
import enum
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SMF_MAGIC = b"SMF1"
_SMF_HEADER = struct.Struct("<4sII")


class SaliencyError(ValueError):
    """Base class for invalid-input errors raised by this package."""


class ZeroMass(SaliencyError):
    pass


class ZeroVariance(SaliencyError):
    pass


class EmptyFixations(SaliencyError):
    pass


class UnnormalizedInput(SaliencyError):
    pass


class MapFormatError(SaliencyError):
    pass


class BadMagic(MapFormatError):
    pass


class TruncatedFile(MapFormatError):
    pass


class VideoCategory(enum.Enum):
    NATURE = "nature"
    SOCIAL_EVENTS = "social"
    MISCELLANEOUS = "misc"

    @property
    def label(self) -> str:
        return {"nature": "Nature", "social": "SocialEvents", "misc": "Miscellaneous"}[self.value]


@dataclass(frozen=True)
class ViewingGeometry:
    pixels_per_degree: float

    def __post_init__(self):
        ppd = self.pixels_per_degree
        if not (math.isfinite(ppd) and ppd > 0):
            raise SaliencyError(f"pixels_per_degree must be finite and positive, got {ppd}")


@dataclass(frozen=True)
class FixationRecord:
    video_id: str
    frame_idx: int
    subject_id: str
    x: int
    y: int


@dataclass(frozen=True)
class FixationFrame:
    """Deduplicated fixated pixels of one frame, stored as ``(y, x)`` pairs."""

    height: int
    width: int
    points: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise SaliencyError("frame dimensions must be positive")
        seen = {}
        for y, x in self.points:
            y, x = int(y), int(x)
            if not (0 <= y < self.height and 0 <= x < self.width):
                raise SaliencyError(f"fixation ({y}, {x}) outside {self.height}x{self.width} frame")
            seen.setdefault((y, x), None)
        object.__setattr__(self, "points", tuple(seen))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def __len__(self) -> int:
        return len(self.points)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Row and column index arrays, suitable for fancy indexing."""
        if not self.points:
            return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
        arr = np.asarray(self.points, dtype=np.intp)
        return arr[:, 0], arr[:, 1]


def check_map(values, name: str = "map") -> np.ndarray:
    """Validate a saliency map and return it as a 2-D float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise SaliencyError(f"{name} must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SaliencyError(f"{name} contains non-finite values")
    if np.any(arr < 0):
        raise SaliencyError(f"{name} contains negative values")
    return arr


def check_distribution(values, name: str = "distribution", atol: float = 1e-6) -> np.ndarray:
    arr = check_map(values, name)
    total = arr.sum()
    if abs(total - 1.0) > atol:
        raise UnnormalizedInput(f"{name} sums to {total!r}, expected 1")
    return arr


def normalize(values) -> np.ndarray:
    arr = check_map(values)
    total = arr.sum()
    if total <= 0:
        raise ZeroMass("cannot normalize a map with zero total mass")
    return arr / total


def rasterize(fixations: FixationFrame) -> np.ndarray:
    """Binary fixation map: 1.0 at each fixated pixel, 0.0 elsewhere."""
    out = np.zeros(fixations.shape, dtype=np.float64)
    rows, cols = fixations.coords()
    out[rows, cols] = 1.0
    return out


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


# --- map IO -----------------------------------------------------------------


def _format_of(path: Path, fmt: str | None) -> str:
    if fmt is None:
        fmt = path.suffix.lstrip(".")
    fmt = fmt.lower()
    if fmt not in ("smf", "pgm"):
        raise MapFormatError(f"unknown map format {fmt!r}")
    return fmt


def write_map(values, path, fmt: str | None = None, validate: bool = True) -> None:
    """Write a map as SMF (lossless float32) or PGM (8-bit, min-max rescaled).

    ``validate=False`` permits negative values in SMF output, used for
    debugging dumps of log spectrograms.
    """
    path = Path(path)
    fmt = _format_of(path, fmt)
    if validate:
        arr = check_map(values)
    else:
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2 or not np.all(np.isfinite(arr)):
            raise SaliencyError("map must be a finite 2-D grid")
    h, w = arr.shape
    if fmt == "smf":
        payload = arr.astype("<f4").tobytes(order="C")
        data = _SMF_HEADER.pack(SMF_MAGIC, h, w) + payload
    else:
        lo, hi = float(arr.min()), float(arr.max())
        if hi > lo:
            scaled = np.floor((arr - lo) / (hi - lo) * 255.0 + 0.5)
        else:
            scaled = np.zeros_like(arr)
        pixels = np.clip(scaled, 0, 255).astype(np.uint8)
        data = f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()
    path.write_bytes(data)


def read_map(path, fmt: str | None = None, validate: bool = True) -> np.ndarray:
    path = Path(path)
    fmt = _format_of(path, fmt)
    data = path.read_bytes()
    if fmt == "smf":
        if len(data) < _SMF_HEADER.size:
            raise TruncatedFile(f"{path}: header truncated")
        magic, h, w = _SMF_HEADER.unpack_from(data)
        if magic != SMF_MAGIC:
            raise BadMagic(f"{path}: bad magic {magic!r}")
        need = _SMF_HEADER.size + 4 * h * w
        if len(data) < need:
            raise TruncatedFile(f"{path}: expected {need} bytes, found {len(data)}")
        arr = np.frombuffer(data, dtype="<f4", count=h * w, offset=_SMF_HEADER.size)
        arr = arr.reshape(h, w).astype(np.float64)
    else:
        arr = _parse_pgm(data, path)
    return check_map(arr) if validate else arr


def _parse_pgm(data: bytes, path) -> np.ndarray:
    if not data.startswith(b"P5"):
        raise BadMagic(f"{path}: not a binary PGM")
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedFile(f"{path}: header truncated")
        tokens.append(int(data[start:pos]))
    pos += 1
    w, h, maxval = tokens
    if maxval != 255:
        raise MapFormatError(f"{path}: only maxval 255 supported")
    if len(data) < pos + w * h:
        raise TruncatedFile(f"{path}: pixel data truncated")
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w).astype(np.float64)


# --- CSV interfaces ---------------------------------------------------------

FIXATION_HEADER = ["video_id", "frame_idx", "subject_id", "x", "y"]
CATEGORY_HEADER = ["video_id", "category"]


def _check_header(reader, expected, path):
    header = next(reader, None)
    if header != expected:
        raise SaliencyError(f"{path}: expected header {','.join(expected)}, got {header}")


def read_fixations_csv(path) -> list[FixationRecord]:
    """Parse a fixation CSV; sub-pixel coordinates are rounded half-up."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        _check_header(reader, FIXATION_HEADER, path)
        for row in reader:
            if not row:
                continue
            vid, frame, subj, x, y = row
            records.append(
                FixationRecord(vid, int(frame), subj, round_half_up(float(x)), round_half_up(float(y)))
            )
    return records


def write_fixations_csv(records: Iterable[FixationRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FIXATION_HEADER)
        for r in records:
            writer.writerow([r.video_id, r.frame_idx, r.subject_id, r.x, r.y])


def read_categories_csv(path) -> dict[str, VideoCategory]:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        _check_header(reader, CATEGORY_HEADER, path)
        for row in reader:
            if not row:
                continue
            vid, cat = row
            try:
                out[vid] = VideoCategory(cat.strip().lower())
            except ValueError:
                raise SaliencyError(f"{path}: unknown category {cat!r} for video {vid}") from None
    return out


def write_categories_csv(categories: dict[str, VideoCategory], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CATEGORY_HEADER)
        for vid in sorted(categories):
            writer.writerow([vid, categories[vid].value])


def group_frames(
    records: Sequence[FixationRecord],
    shape: tuple[int, int],
    subjects: set[str] | None = None,
) -> dict[tuple[str, int], FixationFrame]:
    """Pool fixation records into one frame per ``(video_id, frame_idx)``.

    When ``subjects`` is given, only those subjects contribute; keys whose
    selected subjects have no fixations map to an empty frame.
    """
    pts: dict[tuple[str, int], list] = {}
    for r in records:
        key = (r.video_id, r.frame_idx)
        lst = pts.setdefault(key, [])
        if subjects is None or r.subject_id in subjects:
            lst.append((r.y, r.x))
    h, w = shape
    return {key: FixationFrame(h, w, tuple(p)) for key, p in sorted(pts.items())}


def resize_bilinear(values, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resampling with pixel-centre alignment and edge clamping."""
    arr = np.asarray(values, dtype=np.float64)
    h, w = arr.shape
    oh, ow = shape
    if (h, w) == (oh, ow):
        return arr.copy()

    def axis(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = axis(h, oh)
    x0, x1, fx = axis(w, ow)
    top = arr[y0][:, x0] * (1 - fx) + arr[y0][:, x1] * fx
    bottom = arr[y1][:, x0] * (1 - fx) + arr[y1][:, x1] * fx
    return top * (1 - fy)[:, None] + bottom * fy[:, None]
