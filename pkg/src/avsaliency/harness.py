"""Benchmark harness: per-frame scoring, aggregation, analyses and report output."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import metrics
from .core import (
    FixationFrame,
    SaliencyError,
    VideoCategory,
    ViewingGeometry,
    normalize,
    resize_bilinear,
)
from .fixations import density_map
from .metrics import METRIC_NAMES, ScoreRecord

logger = logging.getLogger(__name__)

Key = tuple[str, int]

NEGATIVE_VIDEOS = 10
NEGATIVE_CAP = 500
TEMPORAL_POINTS = 1000
TEMPORAL_SMOOTH = 25


@dataclass(frozen=True)
class SourceRegion:
    """Inclusive pixel bounding box of a sound source in one frame."""

    video_id: str
    frame_idx: int
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise SaliencyError("source region has min > max")
        if self.x_min < 0 or self.y_min < 0:
            raise SaliencyError("source region outside the frame")

    def contains(self, y: int, x: int) -> bool:
        return self.y_min <= y <= self.y_max and self.x_min <= x <= self.x_max


SOURCE_HEADER = ["video_id", "frame_idx", "x_min", "y_min", "x_max", "y_max"]


def read_sources_csv(path) -> dict[Key, SourceRegion]:
    """Sound-source boxes keyed by ``(video_id, frame_idx)``."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != SOURCE_HEADER:
            raise SaliencyError(f"{path}: expected header {','.join(SOURCE_HEADER)}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(SOURCE_HEADER):
                raise SaliencyError(f"{path}:{lineno}: expected {len(SOURCE_HEADER)} fields")
            try:
                vals = [int(v) for v in row[1:]]
            except ValueError:
                raise SaliencyError(f"{path}:{lineno}: non-integer field") from None
            region = SourceRegion(row[0], *vals)
            out[(region.video_id, region.frame_idx)] = region
    return out


def write_sources_csv(regions: Iterable[SourceRegion], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SOURCE_HEADER)
        for r in sorted(regions, key=lambda r: (r.video_id, r.frame_idx)):
            w.writerow([r.video_id, r.frame_idx, r.x_min, r.y_min, r.x_max, r.y_max])


# --- sAUC negatives ---------------------------------------------------------


def shuffled_negatives(
    fixations: Mapping[Key, FixationFrame],
    seed: int,
    n_videos: int = NEGATIVE_VIDEOS,
    cap: int = NEGATIVE_CAP,
) -> dict[Key, FixationFrame]:
    """Negative points for sAUC, drawn from other videos.

    For each frame, up to ``n_videos`` other videos are sampled uniformly and
    their frame at the same relative position contributes its fixations. The
    pool is subsampled to ``cap`` points.
    """
    videos: dict[str, list[Key]] = {}
    for key in sorted(fixations):
        videos.setdefault(key[0], []).append(key)
    names = sorted(videos)
    out = {}
    for vi, vid in enumerate(names):
        keys = videos[vid]
        others = [n for n in names if n != vid]
        for fi, key in enumerate(keys):
            frame = fixations[key]
            rng = np.random.default_rng(np.random.SeedSequence([seed, vi, fi]))
            rel = fi / (len(keys) - 1) if len(keys) > 1 else 0.0
            picks = rng.choice(len(others), size=min(n_videos, len(others)), replace=False) if others else []
            pool = []
            for j in sorted(int(p) for p in picks):
                okeys = videos[others[j]]
                other = fixations[okeys[int(math.floor(rel * (len(okeys) - 1) + 0.5))]]
                if other.shape == frame.shape:
                    pool.extend(other.points)
            pool = list(dict.fromkeys(pool))
            if len(pool) > cap:
                keep = np.sort(rng.choice(len(pool), size=cap, replace=False))
                pool = [pool[i] for i in keep]
            out[key] = FixationFrame(frame.height, frame.width, tuple(pool))
    return out


# --- per-frame scoring ------------------------------------------------------


def _safe(fn, *args):
    try:
        return fn(*args)
    except SaliencyError:
        return None


def score_frame(
    prediction: np.ndarray,
    fixations: FixationFrame,
    density: Optional[np.ndarray],
    negatives: Optional[FixationFrame],
    key: Key,
) -> ScoreRecord:
    pred = np.maximum(resize_bilinear(prediction, fixations.shape), 0.0)
    pred_dist = _safe(normalize, pred)
    return ScoreRecord(
        key[0],
        key[1],
        nss=_safe(metrics.nss, pred, fixations),
        auc_judd=_safe(metrics.auc_judd, pred, fixations),
        sauc=_safe(metrics.sauc, pred, fixations, negatives) if negatives is not None else None,
        cc=_safe(metrics.cc, pred, density) if density is not None else None,
        sim=_safe(metrics.sim, pred_dist, density) if density is not None and pred_dist is not None else None,
    )


def eval_frames(
    pred_maps: Mapping[Key, np.ndarray],
    gt_fixations: Mapping[Key, FixationFrame],
    gt_densities: Optional[Mapping[Key, np.ndarray]] = None,
    negatives: Optional[Mapping[Key, FixationFrame]] = None,
    geometry: Optional[ViewingGeometry] = None,
) -> tuple[list[ScoreRecord], int]:
    """Score every ground-truth frame that has a prediction.

    Predictions are bilinearly resampled to the fixation resolution. Ground
    truth densities are built from ``geometry`` when not supplied. Returns the
    records (sorted by key) and the number of frames lacking a prediction.
    """
    records, missing = [], 0
    for key in sorted(gt_fixations):
        if key not in pred_maps:
            missing += 1
            continue
        fix = gt_fixations[key]
        if gt_densities is not None:
            dens = gt_densities.get(key)
        elif geometry is not None and len(fix):
            dens = density_map(fix, geometry)
        else:
            dens = None
        neg = negatives.get(key) if negatives is not None else None
        records.append(score_frame(pred_maps[key], fix, dens, neg, key))
    return records, missing


# --- aggregation ------------------------------------------------------------


def _mean_scores(records: Sequence[ScoreRecord]) -> tuple[dict, dict]:
    means, absent = {}, {}
    for name in METRIC_NAMES:
        vals = [getattr(r, name) for r in records if getattr(r, name) is not None]
        means[name] = math.fsum(vals) / len(vals) if vals else None
        absent[name] = len(records) - len(vals)
    return means, absent


@dataclass
class ScopeSummary:
    means: dict
    absent: dict
    frames: int


@dataclass
class EvalReport:
    records: list[ScoreRecord]
    overall: ScopeSummary
    per_video: dict[str, ScopeSummary]
    per_category: dict[str, ScopeSummary]
    missing: int = 0
    metadata: dict = field(default_factory=dict)


def aggregate(
    records: Iterable[ScoreRecord],
    categories: Optional[Mapping[str, VideoCategory]] = None,
    missing: int = 0,
    metadata: Optional[dict] = None,
) -> EvalReport:
    """Frame-weighted means per video, per category and overall."""
    recs = sorted(records, key=lambda r: (r.video_id, r.frame_idx))
    by_video: dict[str, list] = {}
    for r in recs:
        by_video.setdefault(r.video_id, []).append(r)
    per_video = {vid: ScopeSummary(*_mean_scores(rs), len(rs)) for vid, rs in sorted(by_video.items())}
    per_category = {}
    if categories is not None:
        unlabeled = sorted(set(by_video) - set(categories))
        if unlabeled:
            raise SaliencyError(f"videos without a category: {', '.join(unlabeled)}")
        for cat in VideoCategory:
            rs = [r for r in recs if categories[r.video_id] is cat]
            if rs:
                per_category[cat.label] = ScopeSummary(*_mean_scores(rs), len(rs))
    return EvalReport(
        records=recs,
        overall=ScopeSummary(*_mean_scores(recs), len(recs)),
        per_video=per_video,
        per_category=per_category,
        missing=missing,
        metadata=dict(metadata or {}),
    )


# --- analyses ---------------------------------------------------------------


def moving_average(curve: np.ndarray, window: int = TEMPORAL_SMOOTH) -> np.ndarray:
    """Centred moving average with reflected edges."""
    curve = np.asarray(curve, dtype=np.float64)
    if window <= 1:
        return curve.copy()
    left = (window - 1) // 2
    right = window - 1 - left
    padded = np.pad(curve, (left, right), mode="reflect")
    return np.convolve(padded, np.ones(window) / window, mode="valid")


def resample_sequence(values: Sequence[float], n_points: int = TEMPORAL_POINTS) -> np.ndarray:
    """Linear interpolation of a sequence onto ``n_points`` positions over [0, 1]."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise SaliencyError("need at least two frames to resample")
    return np.interp(np.linspace(0.0, 1.0, n_points), np.linspace(0.0, 1.0, v.size), v)


def temporal_profile(
    sequences: Mapping[str, Sequence[float]],
    n_points: int = TEMPORAL_POINTS,
    smooth_window: int = 0,
) -> np.ndarray:
    """Mean score curve over normalised video time.

    Videos with fewer than two scored frames are skipped with a warning.
    """
    curves = []
    for vid in sorted(sequences):
        seq = [s for s in sequences[vid] if s is not None]
        if len(seq) < 2:
            logger.warning("video %s has fewer than two scored frames; excluded", vid)
            continue
        curves.append(resample_sequence(seq, n_points))
    if not curves:
        raise SaliencyError("no video has enough frames for a temporal profile")
    mean = np.mean(curves, axis=0)
    return moving_average(mean, smooth_window) if smooth_window > 1 else mean


@dataclass(frozen=True)
class ContextualScore:
    inside: Optional[float]
    outside: Optional[float]
    full: float
    n_inside: int
    n_outside: int


def contextual_nss(saliency, fixations: FixationFrame, region: SourceRegion) -> ContextualScore:
    """NSS inside the source box, outside it, and over the whole frame.

    All three share the z-score statistics of the full map.
    """
    smap = np.asarray(saliency, dtype=np.float64)
    if region.x_max >= fixations.width or region.y_max >= fixations.height:
        raise SaliencyError("source region outside the frame")
    full = metrics.nss(smap, fixations)
    z = (smap - smap.mean()) / smap.std()
    inside = [z[y, x] for y, x in fixations.points if region.contains(y, x)]
    outside = [z[y, x] for y, x in fixations.points if not region.contains(y, x)]
    return ContextualScore(
        inside=float(np.mean(inside)) if inside else None,
        outside=float(np.mean(outside)) if outside else None,
        full=full,
        n_inside=len(inside),
        n_outside=len(outside),
    )


def improvement_rate(scores_a: Mapping[Key, float], scores_b: Mapping[Key, float]) -> float:
    """Percentage of frames where ``a`` scores strictly higher than ``b``."""
    if set(scores_a) != set(scores_b):
        raise SaliencyError("score sets cover different frames")
    if not scores_a:
        raise SaliencyError("no frames to compare")
    if any(v is None for v in scores_a.values()) or any(v is None for v in scores_b.values()):
        raise SaliencyError("improvement rate needs a score for every frame")
    wins = sum(1 for k in scores_a if scores_a[k] > scores_b[k])
    return 100.0 * wins / len(scores_a)


@dataclass
class Histogram:
    counts: np.ndarray
    edges: np.ndarray
    mean: float


def score_histogram(scores: Sequence[float], bin_count: int, value_range: tuple[float, float]) -> Histogram:
    """Equal-width histogram; out-of-range values land in the edge bins."""
    if bin_count < 1:
        raise SaliencyError("bin_count must be at least 1")
    vals = np.asarray([s for s in scores if s is not None], dtype=np.float64)
    if vals.size == 0:
        raise SaliencyError("no scores to histogram")
    lo, hi = value_range
    if not hi > lo:
        raise SaliencyError("histogram range must have max > min")
    idx = np.floor((vals - lo) / (hi - lo) * bin_count).astype(np.int64)
    idx = np.clip(idx, 0, bin_count - 1)
    counts = np.bincount(idx, minlength=bin_count)
    return Histogram(counts, np.linspace(lo, hi, bin_count + 1), float(math.fsum(vals) / vals.size))


# --- report output ----------------------------------------------------------

REPORT_HEADER = ["model", "scope", *METRIC_NAMES, "frames", "missing"]
FRAME_HEADER = ["video_id", "frame_idx", *METRIC_NAMES]


def _fmt4(v) -> str:
    return "" if v is None else f"{v:.4f}"


def _fmt_full(v) -> str:
    return "" if v is None else repr(float(v))


def write_frame_scores(records: Sequence[ScoreRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRAME_HEADER)
        for r in sorted(records, key=lambda r: (r.video_id, r.frame_idx)):
            w.writerow([r.video_id, r.frame_idx, *(_fmt_full(getattr(r, m)) for m in METRIC_NAMES)])


def read_frame_scores(path) -> list[ScoreRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FRAME_HEADER:
            raise SaliencyError(f"{path}: expected header {','.join(FRAME_HEADER)}")
        for row in reader:
            if not row:
                continue
            vals = {m: (float(v) if v != "" else None) for m, v in zip(METRIC_NAMES, row[2:])}
            out.append(ScoreRecord(row[0], int(row[1]), **vals))
    return out


def _report_rows(report: EvalReport) -> list[list[str]]:
    model = str(report.metadata.get("model", "model"))
    rows = []

    def row(scope, summary, missing=""):
        rows.append([model, scope, *(_fmt4(summary.means[m]) for m in METRIC_NAMES), str(summary.frames), str(missing)])

    row("overall", report.overall, report.missing)
    for label, summary in report.per_category.items():
        row(f"category:{label}", summary)
    for vid, summary in report.per_video.items():
        row(f"video:{vid}", summary)
    return rows


def _summary_json(s: ScopeSummary) -> dict:
    return {"means": s.means, "absent": s.absent, "frames": s.frames}


def report_to_json(report: EvalReport) -> str:
    doc = {
        "metadata": report.metadata,
        "missing": report.missing,
        "overall": _summary_json(report.overall),
        "per_category": {k: _summary_json(v) for k, v in report.per_category.items()},
        "per_video": {k: _summary_json(v) for k, v in report.per_video.items()},
        "frames": [
            {"video_id": r.video_id, "frame_idx": r.frame_idx, **r.scores()} for r in report.records
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit_report(report: EvalReport, out_dir, formats: Iterable[str] = ("csv", "json", "svg")) -> list[Path]:
    """Write the report; output bytes depend only on the report contents."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    formats = set(formats)
    unknown = formats - {"csv", "json", "svg"}
    if unknown:
        raise SaliencyError(f"unknown report formats: {sorted(unknown)}")
    if "csv" in formats:
        path = out_dir / "report.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_HEADER)
            w.writerows(_report_rows(report))
        written.append(path)
        path = out_dir / "frames.csv"
        write_frame_scores(report.records, path)
        written.append(path)
    if "json" in formats:
        path = out_dir / "report.json"
        path.write_text(report_to_json(report), encoding="utf-8")
        written.append(path)
    if "svg" in formats:
        path = out_dir / "report.svg"
        scopes = {"overall": report.overall.means.get("nss")}
        scopes.update({k: v.means.get("nss") for k, v in report.per_category.items()})
        groups = {k: {"NSS": v} for k, v in scopes.items() if v is not None}
        path.write_text(svg_bar_chart(groups, title="Mean NSS"), encoding="utf-8")
        written.append(path)
    return written


# --- SVG --------------------------------------------------------------------

_W, _H, _PAD = 640, 360, 40
_PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _svg(body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">\n'
        f'<rect width="{_W}" height="{_H}" fill="white"/>\n'
        f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _scale(lo, hi):
    if hi <= lo:
        hi = lo + 1.0
    return lambda v: _H - _PAD - (v - lo) / (hi - lo) * (_H - 2 * _PAD)


def svg_line_plot(curves: Mapping[str, np.ndarray], title: str = "") -> str:
    """One polyline per curve, every sample as a vertex."""
    allv = np.concatenate([np.asarray(c, dtype=np.float64) for c in curves.values()])
    ys = _scale(float(allv.min()), float(allv.max()))
    body = []
    for i, (name, curve) in enumerate(curves.items()):
        c = np.asarray(curve, dtype=np.float64)
        xs = np.linspace(_PAD, _W - _PAD, c.size)
        pts = " ".join(f"{x:.2f},{ys(v):.2f}" for x, v in zip(xs, c))
        color = _PALETTE[i % len(_PALETTE)]
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        body.append(f'<text x="{_W - _PAD}" y="{40 + 14 * i}" text-anchor="end" font-size="11" fill="{color}">{escape(str(name))}</text>')
    return _svg(body, title)


def svg_histogram(hist: Histogram, title: str = "") -> str:
    ys = _scale(0.0, float(hist.counts.max()) if hist.counts.size else 1.0)
    lo, hi = float(hist.edges[0]), float(hist.edges[-1])
    xs = lambda v: _PAD + (v - lo) / (hi - lo) * (_W - 2 * _PAD)
    body = []
    for c, a, b in zip(hist.counts, hist.edges[:-1], hist.edges[1:]):
        top = ys(float(c))
        body.append(
            f'<rect x="{xs(a):.2f}" y="{top:.2f}" width="{xs(b) - xs(a):.2f}" height="{_H - _PAD - top:.2f}" '
            f'fill="#1f77b4" stroke="white"/>'
        )
    m = min(max(hist.mean, lo), hi)
    body.append(f'<line x1="{xs(m):.2f}" y1="{_PAD}" x2="{xs(m):.2f}" y2="{_H - _PAD}" stroke="#d62728"/>')
    return _svg(body, title)


def svg_bar_chart(groups: Mapping[str, Mapping[str, float]], title: str = "") -> str:
    """Grouped bars: ``groups[group][series] = value``."""
    series = sorted({s for g in groups.values() for s in g})
    vals = [v for g in groups.values() for v in g.values()] or [0.0]
    ys = _scale(min(0.0, min(vals)), max(0.0, max(vals)))
    base = ys(0.0)
    n = max(len(groups), 1)
    slot = (_W - 2 * _PAD) / n
    bar = slot * 0.8 / max(len(series), 1)
    body = []
    for gi, (gname, g) in enumerate(groups.items()):
        x0 = _PAD + gi * slot + slot * 0.1
        for si, s in enumerate(series):
            if s not in g:
                continue
            y = ys(g[s])
            body.append(
                f'<rect x="{x0 + si * bar:.2f}" y="{min(y, base):.2f}" width="{bar:.2f}" '
                f'height="{abs(base - y):.2f}" fill="{_PALETTE[si % len(_PALETTE)]}"/>'
            )
        body.append(f'<text x="{x0 + slot * 0.4:.2f}" y="{_H - 10}" text-anchor="middle" font-size="11">{escape(str(gname))}</text>')
    for si, s in enumerate(series):
        body.append(
            f'<text x="{_W - _PAD}" y="{40 + 14 * si}" text-anchor="end" font-size="11" '
            f'fill="{_PALETTE[si % len(_PALETTE)]}">{escape(str(s))}</text>'
        )
    return _svg(body, title)
