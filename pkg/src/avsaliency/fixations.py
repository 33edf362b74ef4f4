"""Ground-truth construction: density maps, MEP, human-infinite bound, synthetic data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import metrics
from .core import (
    EmptyFixations,
    FixationFrame,
    FixationRecord,
    SaliencyError,
    ViewingGeometry,
    check_map,
    group_frames,
    normalize,
)
from .metrics import ScoreRecord

TRUNCATE_SIGMAS = 4.0


def density_map(fixations: FixationFrame, geometry: ViewingGeometry) -> np.ndarray:
    """Gaussian fixation density with sigma of one degree of visual angle.

    Each kernel is cut off beyond ``4 * sigma`` from its centre, and the
    summed map is normalised to unit mass.
    """
    if len(fixations) == 0:
        raise EmptyFixations("density map needs at least one fixation")
    sigma = geometry.pixels_per_degree
    radius = int(math.floor(TRUNCATE_SIGMAS * sigma))
    h, w = fixations.shape
    out = np.zeros((h, w), dtype=np.float64)
    offs = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(offs, offs, indexing="ij")
    d2 = dy * dy + dx * dx
    kernel = np.where(d2 <= (TRUNCATE_SIGMAS * sigma) ** 2, np.exp(-d2 / (2.0 * sigma * sigma)), 0.0)
    for y, x in fixations.points:
        y0, y1 = max(0, y - radius), min(h, y + radius + 1)
        x0, x1 = max(0, x - radius), min(w, x + radius + 1)
        out[y0:y1, x0:x1] += kernel[y0 - y + radius : y1 - y + radius, x0 - x + radius : x1 - x + radius]
    return out / out.sum()


def mep(densities: Sequence[np.ndarray]) -> np.ndarray:
    """Mean eye position map: per-frame weighted pixelwise mean, renormalised."""
    if len(densities) == 0:
        raise SaliencyError("MEP needs at least one density map")
    arrays = [check_map(d) for d in densities]
    shape = arrays[0].shape
    total = np.zeros(shape, dtype=np.float64)
    for a in arrays:
        if a.shape != shape:
            raise SaliencyError(f"density shape {a.shape} differs from {shape}")
        total += a
    return normalize(total / len(arrays))


def area_downsample(values: np.ndarray, factor: int) -> np.ndarray:
    """Block-average by an integer factor, then renormalise to unit mass."""
    arr = check_map(values)
    h, w = arr.shape
    if h % factor or w % factor:
        raise SaliencyError(f"{h}x{w} map is not divisible by {factor}")
    pooled = arr.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
    return normalize(pooled)


class DensityMapTransformer(TransformerMixin, BaseEstimator):
    """Turns fixation frames into ground-truth density maps.

    ``downsample`` block-averages the result (the model's supervision
    resolution is one eighth of the input).
    """

    def __init__(self, pixels_per_degree: float = 2.0, downsample: int = 1):
        self.pixels_per_degree = pixels_per_degree
        self.downsample = downsample

    def fit(self, X=None, y=None):
        self.geometry_ = ViewingGeometry(self.pixels_per_degree)
        return self

    def transform(self, X: Sequence[FixationFrame]) -> np.ndarray:
        geom = getattr(self, "geometry_", None) or ViewingGeometry(self.pixels_per_degree)
        maps = [density_map(f, geom) for f in X]
        if self.downsample > 1:
            maps = [area_downsample(m, self.downsample) for m in maps]
        return np.stack(maps) if maps else np.zeros((0, 0, 0))


class MEPBaseline(BaseEstimator):
    """Center-bias baseline: predicts the mean training density for every frame."""

    def __init__(self, pixels_per_degree: float = 2.0):
        self.pixels_per_degree = pixels_per_degree

    def fit(self, X: Sequence[FixationFrame], y=None):
        geom = ViewingGeometry(self.pixels_per_degree)
        frames = [f for f in X if len(f)]
        if not frames:
            raise EmptyFixations("no fixated frames to build an MEP map from")
        self.map_ = mep([density_map(f, geom) for f in frames])
        self.n_frames_ = len(frames)
        return self

    def predict(self, X) -> np.ndarray:
        return np.repeat(self.map_[None], len(X), axis=0)


# --- human infinite ---------------------------------------------------------


@dataclass(frozen=True)
class SubjectSplit:
    half_a: frozenset
    half_b: frozenset
    seed: int

    def __post_init__(self):
        if self.half_a & self.half_b:
            raise SaliencyError("split halves overlap")
        if abs(len(self.half_a) - len(self.half_b)) > 1:
            raise SaliencyError("split halves differ in size by more than one")

    def swapped(self) -> "SubjectSplit":
        return SubjectSplit(self.half_b, self.half_a, self.seed)


def split_subjects(subjects, seed: int) -> SubjectSplit:
    """Random split into halves; the first half takes the odd subject."""
    ordered = sorted(set(subjects))
    perm = np.random.default_rng(seed).permutation(len(ordered))
    cut = len(ordered) - len(ordered) // 2
    a = frozenset(ordered[i] for i in perm[:cut])
    b = frozenset(ordered[i] for i in perm[cut:])
    return SubjectSplit(a, b, seed)


def split_per_video(records: Sequence[FixationRecord], seed: int) -> dict[str, SubjectSplit]:
    subjects: dict[str, set] = {}
    for r in records:
        subjects.setdefault(r.video_id, set()).add(r.subject_id)
    seeds = np.random.SeedSequence(seed).spawn(len(subjects))
    return {
        vid: split_subjects(subjects[vid], int(s.generate_state(1)[0]))
        for vid, s in zip(sorted(subjects), seeds)
    }


def _score_direction(
    src: FixationFrame,
    dst: FixationFrame,
    geometry: ViewingGeometry,
    negatives: Optional[FixationFrame],
) -> dict:
    pred = density_map(src, geometry)
    target_density = density_map(dst, geometry)
    out = {}
    for name, fn in (
        ("nss", lambda: metrics.nss(pred, dst)),
        ("auc_judd", lambda: metrics.auc_judd(pred, dst)),
        ("sauc", lambda: metrics.sauc(pred, dst, negatives) if negatives is not None else None),
        ("cc", lambda: metrics.cc(pred, target_density)),
        ("sim", lambda: metrics.sim(pred, target_density)),
    ):
        try:
            out[name] = fn()
        except SaliencyError:
            out[name] = None
    return out


def human_infinite(
    records: Sequence[FixationRecord],
    split,
    geometry: ViewingGeometry,
    shape: tuple[int, int],
    negatives: Optional[Mapping[tuple[str, int], FixationFrame]] = None,
) -> list[ScoreRecord]:
    """Score one half of the observers against the other, per frame.

    ``split`` is a single :class:`SubjectSplit` or a mapping from video id to
    split. Both directions are scored and averaged; frames where either half
    has no fixations get an all-absent record.
    """
    keys = sorted({(r.video_id, r.frame_idx) for r in records})
    by_video: dict[str, list] = {}
    for r in records:
        by_video.setdefault(r.video_id, []).append(r)
    out = []
    frames_a: dict = {}
    frames_b: dict = {}
    for vid, recs in by_video.items():
        s = split[vid] if isinstance(split, Mapping) else split
        frames_a.update(group_frames(recs, shape, set(s.half_a)))
        frames_b.update(group_frames(recs, shape, set(s.half_b)))
    for key in keys:
        fa, fb = frames_a[key], frames_b[key]
        if len(fa) == 0 or len(fb) == 0:
            out.append(ScoreRecord(*key))
            continue
        neg = negatives.get(key) if negatives is not None else None
        ab = _score_direction(fa, fb, geometry, neg)
        ba = _score_direction(fb, fa, geometry, neg)
        merged = {}
        for name in metrics.METRIC_NAMES:
            vals = [v for v in (ab[name], ba[name]) if v is not None]
            merged[name] = float(np.mean(vals)) if len(vals) == 2 else None
        out.append(ScoreRecord(key[0], key[1], **merged))
    return out


# --- synthetic data ---------------------------------------------------------

BLOB_COLORS = (
    (1.0, 0.15, 0.15),
    (0.15, 1.0, 0.15),
    (0.15, 0.15, 1.0),
    (1.0, 1.0, 0.15),
)


@dataclass(frozen=True)
class SynthClipSpec:
    """Parameters of the synthetic audio-visual corpus.

    ``distractor_fraction`` of the virtual subjects look at a non-target
    blob when more than one blob exists. ``drift`` bounds each blob's
    displacement over the clip, per axis, as a fraction of the frame height.
    """

    frames: int = 16
    height: int = 64
    width: int = 96
    blob_count: int = 2
    tone_map: Mapping[int, float] = field(default_factory=lambda: {0: 440.0, 1: 1760.0})
    seed: int = 0
    n_clips: int = 1
    subjects: int = 20
    distractor_fraction: float = 0.1
    blob_sigma: float = 4.0
    drift: float = 0.25
    fps: float = 25.0
    sample_rate: int = 16000

    def __post_init__(self):
        if self.frames < 1 or self.height < 8 or self.width < 8:
            raise SaliencyError("synthetic clips need frames >= 1 and at least 8x8 pixels")
        if not 1 <= self.blob_count <= len(BLOB_COLORS):
            raise SaliencyError(f"blob_count must be in 1..{len(BLOB_COLORS)}")
        for i in range(self.blob_count):
            f = self.tone_map.get(i)
            if f is None or not 0 < f < 8000:
                raise SaliencyError(f"blob {i} needs a tone frequency in (0, 8000) Hz")
        if self.n_clips < 1 or self.subjects < 1:
            raise SaliencyError("n_clips and subjects must be positive")
        if not 0 <= self.distractor_fraction < 1:
            raise SaliencyError("distractor_fraction must be in [0, 1)")
        if self.drift < 0:
            raise SaliencyError("drift must be non-negative")


@dataclass
class SynthClip:
    video_id: str
    frames: np.ndarray  # (F, 3, H, W) float32 in [0, 1]
    audio: np.ndarray  # mono samples in [-1, 1]
    sample_rate: int
    fixations: list[FixationRecord]
    target: int
    centers: np.ndarray  # (F, blob_count, 2) as (y, x)
    boxes: list[tuple[int, int, int, int]]  # target bbox per frame (x0, y0, x1, y1)

    def fixation_frame(self, frame_idx: int) -> FixationFrame:
        h, w = self.frames.shape[2:]
        pts = tuple((r.y, r.x) for r in self.fixations if r.frame_idx == frame_idx)
        return FixationFrame(h, w, pts)


def _trajectories(rng, spec: SynthClipSpec) -> np.ndarray:
    h, w, n, f = spec.height, spec.width, spec.blob_count, spec.frames
    margin = 2.5 * spec.blob_sigma
    min_sep = 6.0 * spec.blob_sigma
    lo = np.array([margin, margin])
    hi = np.array([h - 1 - margin, w - 1 - margin])
    t = np.arange(f)[:, None]
    for _ in range(1000):
        starts = rng.uniform(lo, hi, size=(n, 2))
        ends = rng.uniform(lo, hi, size=(n, 2))
        # linear motion, displacement bounded by the drift
        ends = starts + np.clip(ends - starts, -spec.drift * spec.height, spec.drift * spec.height)
        ends = np.clip(ends, lo, hi)
        frac = t / max(f - 1, 1)
        centers = starts[None] + frac[..., None] * (ends - starts)[None]
        ok = True
        for i in range(n):
            for j in range(i + 1, n):
                if np.min(np.linalg.norm(centers[:, i] - centers[:, j], axis=-1)) < min_sep:
                    ok = False
        if ok:
            return centers
    raise SaliencyError("could not place non-overlapping blobs; enlarge the frame")


def _render(spec: SynthClipSpec, centers: np.ndarray) -> np.ndarray:
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    out = np.full((spec.frames, 3, spec.height, spec.width), 0.05)
    for k in range(spec.frames):
        for i in range(spec.blob_count):
            cy, cx = centers[k, i]
            g = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * spec.blob_sigma**2))
            out[k] += np.asarray(BLOB_COLORS[i])[:, None, None] * g[None]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def synth_clip(spec: SynthClipSpec, index: int, rng: np.random.Generator) -> SynthClip:
    centers = _trajectories(rng, spec)
    target = int(rng.integers(spec.blob_count))
    n_samples = int(round(spec.frames / spec.fps * spec.sample_rate))
    t = np.arange(n_samples) / spec.sample_rate
    audio = 0.5 * np.sin(2 * np.pi * spec.tone_map[target] * t)
    n_distract = int(round(spec.distractor_fraction * spec.subjects)) if spec.blob_count > 1 else 0
    looks_away = set(rng.permutation(spec.subjects)[:n_distract].tolist())
    others = [i for i in range(spec.blob_count) if i != target]
    vid = f"clip{index:04d}"
    records = []
    boxes = []
    half = int(math.ceil(2 * spec.blob_sigma))
    for k in range(spec.frames):
        cy, cx = centers[k, target]
        iy, ix = int(round(cy)), int(round(cx))
        boxes.append(
            (max(0, ix - half), max(0, iy - half), min(spec.width - 1, ix + half), min(spec.height - 1, iy + half))
        )
        for s in range(spec.subjects):
            blob = others[s % len(others)] if s in looks_away else target
            jy, jx = rng.integers(-1, 2, size=2)
            y = int(np.clip(round(centers[k, blob, 0]) + jy, 0, spec.height - 1))
            x = int(np.clip(round(centers[k, blob, 1]) + jx, 0, spec.width - 1))
            records.append(FixationRecord(vid, k, f"s{s:02d}", x, y))
    return SynthClip(vid, _render(spec, centers), audio, spec.sample_rate, records, target, centers, boxes)


def synth_dataset(spec: SynthClipSpec) -> list[SynthClip]:
    """Deterministic corpus of moving-blob clips whose audio names the target blob."""
    rng = np.random.default_rng(spec.seed)
    return [synth_clip(spec, i, rng) for i in range(spec.n_clips)]


def center_bias_corpus(
    n_videos: int = 50,
    frames: int = 10,
    shape: tuple[int, int] = (48, 64),
    subjects: int = 15,
    spread: float = 0.12,
    seed: int = 0,
) -> list[FixationRecord]:
    """Fixations scattered around the frame centre with no stimulus content.

    ``spread`` is the Gaussian standard deviation as a fraction of each
    frame dimension.
    """
    rng = np.random.default_rng(seed)
    h, w = shape
    out = []
    for v in range(n_videos):
        for k in range(frames):
            ys = np.clip(np.rint(rng.normal((h - 1) / 2, spread * h, subjects)), 0, h - 1).astype(int)
            xs = np.clip(np.rint(rng.normal((w - 1) / 2, spread * w, subjects)), 0, w - 1).astype(int)
            for s in range(subjects):
                out.append(FixationRecord(f"v{v:03d}", k, f"s{s:02d}", int(xs[s]), int(ys[s])))
    return out


def _parse_tone_map(text: str) -> dict[int, float]:
    out = {}
    for item in text.split(","):
        k, _, v = item.partition(":")
        if not v:
            raise SaliencyError(f"tone_map entries look like 0:440, got {item!r}")
        out[int(k)] = float(v)
    return out


_SPEC_TYPES = {
    "frames": int,
    "height": int,
    "width": int,
    "blob_count": int,
    "tone_map": _parse_tone_map,
    "seed": int,
    "n_clips": int,
    "subjects": int,
    "distractor_fraction": float,
    "blob_sigma": float,
    "drift": float,
    "fps": float,
    "sample_rate": int,
}


def parse_synth_spec(text: str, extra: Sequence[str] = ()) -> tuple[dict, dict]:
    """Parse ``key = value`` lines into spec keyword arguments.

    Keys listed in ``extra`` are returned separately as raw strings so
    callers can carry their own settings in the same file.
    """
    spec, rest = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise SaliencyError(f"line {lineno}: expected key = value")
        if key in extra:
            rest[key] = value
        elif key in _SPEC_TYPES:
            try:
                spec[key] = _SPEC_TYPES[key](value)
            except ValueError:
                raise SaliencyError(f"line {lineno}: bad value for {key}: {value!r}") from None
        else:
            raise SaliencyError(f"line {lineno}: unknown key {key!r}")
    return spec, rest
