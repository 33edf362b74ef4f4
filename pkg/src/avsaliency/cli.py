"""Command-line entry point: ``avsaliency <command> [flags]``.

Every command prints its effective configuration as JSON on stdout before
doing any work. Exit codes: 0 success, 1 validation error, 2 degenerate data.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import harness
from .core import (
    EmptyFixations,
    FixationFrame,
    SaliencyError,
    VideoCategory,
    ViewingGeometry,
    ZeroMass,
    ZeroVariance,
    group_frames,
    read_categories_csv,
    read_fixations_csv,
    read_map,
    write_categories_csv,
    write_fixations_csv,
    write_map,
)
from .metrics import METRIC_NAMES, DegenerateNegatives, EmptyNegatives

logger = logging.getLogger("avsaliency")

EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE = 0, 1, 2

# named random sub-streams derived from the single --seed flag
STREAMS = {"split": 0, "negatives": 1, "init": 2, "data": 3}


class DegenerateData(SaliencyError):
    """Input is well formed but nothing can be scored or trained on."""


DEGENERATE_ERRORS = (DegenerateData, ZeroMass, ZeroVariance, EmptyFixations, DegenerateNegatives, EmptyNegatives)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def substream(seed: int, name: str) -> int:
    """Independent 32-bit seed for one named stage."""
    return int(np.random.SeedSequence([int(seed), STREAMS[name]]).generate_state(1)[0])


# --- argument types ---------------------------------------------------------


def _size(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", str(text))
    if not m or int(m[1]) < 1 or int(m[2]) < 1:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}")
    return int(m[1]), int(m[2])


def _range(text: str) -> tuple[float, float]:
    lo, sep, hi = str(text).partition(":")
    try:
        out = float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    if not sep or not out[1] > out[0]:
        raise argparse.ArgumentTypeError(f"expected LO:HI with HI > LO, got {text!r}")
    return out


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(kind):
    def convert(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {text!r}")
        return v

    return convert


# --- shared IO helpers ------------------------------------------------------

_FRAME_FILE = re.compile(r"^(\d{6})\.(smf|pgm)$")


def read_predictions(root) -> dict[tuple[str, int], np.ndarray]:
    """Load ``<root>/<video_id>/<frame_idx:06d>.smf`` (or ``.pgm``) maps."""
    root = Path(root)
    if not root.is_dir():
        raise SaliencyError(f"{root}: prediction directory not found")
    out = {}
    for vdir in sorted(p for p in root.iterdir() if p.is_dir()):
        for f in sorted(vdir.iterdir()):
            m = _FRAME_FILE.match(f.name)
            if m:
                out[(vdir.name, int(m[1]))] = read_map(f)
    if not out:
        raise SaliencyError(f"{root}: no prediction maps found")
    return out


def write_predictions(preds: dict, root) -> None:
    root = Path(root)
    for (vid, k), m in sorted(preds.items()):
        (root / vid).mkdir(parents=True, exist_ok=True)
        write_map(m, root / vid / f"{k:06d}.smf")


def _frames_for(records, shape) -> dict:
    for r in records:
        if not (0 <= r.x < shape[1] and 0 <= r.y < shape[0]):
            raise SaliencyError(
                f"fixation ({r.x}, {r.y}) of {r.video_id}:{r.frame_idx} lies outside {shape[0]}x{shape[1]}; set --size"
            )
    return group_frames(records, shape)


def _frame_shape(cfg: dict, preds: Optional[dict]) -> tuple[int, int]:
    if cfg.get("size"):
        return tuple(cfg["size"])
    if preds:
        shapes = {m.shape for m in preds.values()}
        if len(shapes) == 1:
            return shapes.pop()
    raise SaliencyError("cannot infer the frame size; pass --size HxW")


def _read_score_files(specs: Sequence[str]) -> dict[str, list]:
    """``NAME=PATH`` or ``PATH`` (named after its directory) to score records."""
    out = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep:
            path, name = spec, Path(spec).parent.name or Path(spec).stem
        if name in out:
            raise SaliencyError(f"duplicate score set name {name!r}")
        out[name] = harness.read_frame_scores(path)
    return out


def _metric_values(records, metric: str) -> dict:
    return {(r.video_id, r.frame_idx): getattr(r, metric) for r in records}


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _pool_map(fn: Callable, items: list, jobs: int) -> list:
    """Ordered map; results come back in input order for any worker count."""
    if jobs <= 1 or len(items) < 2:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_star, [(fn, it) for it in items], chunksize=max(1, len(items) // (4 * jobs))))


def _star(packed):
    fn, args = packed
    return fn(*args)


# --- commands ---------------------------------------------------------------


def cmd_eval(cfg: dict, dry_run: bool) -> int:
    preds = read_predictions(cfg["pred"])
    records = read_fixations_csv(cfg["fix"])
    shape = _frame_shape(cfg, preds)
    fixations = _frames_for(records, shape)
    cats = read_categories_csv(cfg["cats"]) if cfg.get("cats") else None
    geometry = ViewingGeometry(cfg["geom"])
    if dry_run:
        return EXIT_OK
    negatives = harness.shuffled_negatives(fixations, substream(cfg["seed"], "negatives"))
    keys = [k for k in sorted(fixations) if k in preds]
    missing = len(fixations) - len(keys)
    items = [(preds[k], fixations[k], None, negatives[k], k, cfg["geom"]) for k in keys]
    scored = _pool_map(_score_one, items, cfg["jobs"])
    if not any(any(v is not None for v in r.scores().values()) for r in scored):
        raise DegenerateData("no frame could be scored")
    report = harness.aggregate(
        scored, cats, missing, {"model": cfg["model_name"], "seed": cfg["seed"], "geom": cfg["geom"]}
    )
    harness.emit_report(report, cfg["out"])
    _print_summary(report.overall.means, missing)
    return EXIT_OK


def _score_one(pred, fix, dens, neg, key, ppd):
    if dens is None and len(fix):
        from .fixations import density_map

        dens = density_map(fix, ViewingGeometry(ppd))
    return harness.score_frame(pred, fix, dens, neg, key)


def _print_summary(means: dict, missing: int = 0) -> None:
    parts = [f"{m}={means[m]:.4f}" for m in METRIC_NAMES if means.get(m) is not None]
    print(" ".join(parts) + (f" missing={missing}" if missing else ""))


def cmd_baseline_mep(cfg: dict, dry_run: bool) -> int:
    from .fixations import MEPBaseline

    if not cfg.get("size"):
        raise SaliencyError("baseline-mep needs --size HxW")
    shape = tuple(cfg["size"])
    train = _frames_for(read_fixations_csv(cfg["fix"]), shape)
    test = _frames_for(read_fixations_csv(cfg["test_fix"]), shape) if cfg.get("test_fix") else None
    cats = read_categories_csv(cfg["cats"]) if cfg.get("cats") else None
    if dry_run:
        return EXIT_OK
    est = MEPBaseline(cfg["geom"]).fit([train[k] for k in sorted(train)])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_map(est.map_, out / "mep.smf")
    if test is None:
        return EXIT_OK
    preds = {k: est.map_ for k in test}
    negatives = harness.shuffled_negatives(test, substream(cfg["seed"], "negatives"))
    scored, missing = harness.eval_frames(preds, test, negatives=negatives, geometry=ViewingGeometry(cfg["geom"]))
    report = harness.aggregate(
        scored, cats, missing, {"model": "MEP", "seed": cfg["seed"], "frames_weighting": "per-frame"}
    )
    harness.emit_report(report, out)
    _print_summary(report.overall.means)
    return EXIT_OK


def cmd_baseline_human_infinite(cfg: dict, dry_run: bool) -> int:
    from .fixations import human_infinite, split_per_video

    if not cfg.get("size"):
        raise SaliencyError("baseline-human-infinite needs --size HxW")
    shape = tuple(cfg["size"])
    records = read_fixations_csv(cfg["fix"])
    frames = _frames_for(records, shape)
    cats = read_categories_csv(cfg["cats"]) if cfg.get("cats") else None
    if dry_run:
        return EXIT_OK
    split_seed = substream(cfg["seed"], "split")
    splits = split_per_video(records, split_seed)
    negatives = harness.shuffled_negatives(frames, substream(cfg["seed"], "negatives"))
    scored = human_infinite(records, splits, ViewingGeometry(cfg["geom"]), shape, negatives)
    if not any(r.nss is not None for r in scored):
        raise DegenerateData("no frame has fixations in both subject halves")
    meta = {"model": "HumanInfinite", "seed": cfg["seed"], "split_seed": split_seed}
    report = harness.aggregate(scored, cats, 0, meta)
    harness.emit_report(report, cfg["out"])
    _print_summary(report.overall.means)
    return EXIT_OK


def cmd_audio_prep(cfg: dict, dry_run: bool) -> int:
    from .audio import audio_tensor, dump_mel, log_mel, pad_spectrogram, read_wav, resample, SAMPLE_RATE

    signal = read_wav(cfg["audio"])
    if dry_run:
        return EXIT_OK
    tensor = audio_tensor(signal)
    if cfg.get("out"):
        out = Path(cfg["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
        np.save(out, tensor)
    if cfg.get("dump_mel"):
        dump_mel(pad_spectrogram(log_mel(resample(signal, SAMPLE_RATE))), cfg["dump_mel"])
    print(f"audio tensor {tuple(tensor.shape)} from {len(signal)} samples at {signal.sample_rate} Hz")
    return EXIT_OK


def _synth_setup(cfg: dict):
    """Synthetic spec (data stream seeded) plus CLI extras from the spec file."""
    from .fixations import SynthClipSpec, parse_synth_spec

    text = Path(cfg["synth_spec"]).read_text(encoding="utf-8") if cfg.get("synth_spec") else ""
    kwargs, extra = parse_synth_spec(text, extra=("train_clips",))
    kwargs["seed"] = substream(cfg["seed"], "data")
    spec = SynthClipSpec(**kwargs)
    train_clips = int(extra.get("train_clips", spec.n_clips))
    if not 0 < train_clips <= spec.n_clips:
        raise SaliencyError("train_clips must be in 1..n_clips")
    return spec, train_clips


def cmd_synth(cfg: dict, dry_run: bool) -> int:
    from .audio import PcmSignal, write_wav
    from .fixations import synth_dataset

    spec, _ = _synth_setup(cfg)
    if dry_run:
        return EXIT_OK
    out = Path(cfg["out"])
    clips = synth_dataset(spec)
    records, regions, cats = [], [], {}
    labels = list(VideoCategory)
    for i, clip in enumerate(clips):
        vdir = out / "frames" / clip.video_id
        vdir.mkdir(parents=True, exist_ok=True)
        for k, frame in enumerate(clip.frames):
            # RGB planes stacked vertically: a (3H, W) map
            write_map(frame.reshape(-1, frame.shape[-1]), vdir / f"{k:06d}.smf")
        write_wav(PcmSignal(clip.audio, clip.sample_rate), out / f"{clip.video_id}.wav")
        records.extend(clip.fixations)
        regions.extend(harness.SourceRegion(clip.video_id, k, *box) for k, box in enumerate(clip.boxes))
        cats[clip.video_id] = labels[i % len(labels)]
    write_fixations_csv(records, out / "fixations.csv")
    harness.write_sources_csv(regions, out / "sources.csv")
    write_categories_csv(cats, out / "categories.csv")
    print(f"wrote {len(clips)} clips of {spec.frames} frames to {out}")
    return EXIT_OK


TRAIN_DEFAULTS = {
    "batch_size": 10,
    "lr": 1e-3,
    "epochs": 10,
    "widths": (8, 16, 16, 32, 32),
    "decoder_widths": (16, 16),
    "stride": 16,
    "image_clips": 0,
}


def cmd_train(cfg: dict, dry_run: bool) -> int:
    import torch

    from .model.data import clips_to_dataset, normalize_frames, segment_target
    from .model.estimator import AVSaliencyModel
    from .model.training import ImageDataset
    from .fixations import synth_dataset

    spec, train_clips = _synth_setup(cfg)
    if not cfg.get("out"):
        raise SaliencyError("train needs --out for the checkpoint")
    model = AVSaliencyModel(
        mode=cfg["mode"],
        widths=tuple(cfg["widths"]),
        decoder_widths=tuple(cfg["decoder_widths"]),
        batch_size=cfg["batch_size"],
        learning_rate=cfg["lr"],
        epochs=cfg["epochs"],
        seed=substream(cfg["seed"], "init"),
    )
    if len(model.widths) != 5 or len(model.decoder_widths) != 2:
        raise SaliencyError("widths needs five values and decoder_widths two")
    if dry_run:
        return EXIT_OK
    torch.use_deterministic_algorithms(True)
    geometry = ViewingGeometry(cfg["geom"])
    clips = synth_dataset(dataclasses.replace(spec, n_clips=spec.n_clips + cfg["image_clips"]))
    data, _ = clips_to_dataset(clips[:train_clips], geometry, cfg["stride"], spec.fps)
    images = None
    if cfg["image_clips"]:
        stills = clips[spec.n_clips :]
        images = ImageDataset(
            np.stack([normalize_frames(c.frames[-1]) for c in stills]),
            np.stack([segment_target(c, c.frames.shape[0] - 1, geometry) for c in stills]).astype(np.float32),
        )
    model.fit(data, image_data=images)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    sidecar = {
        "mode": model.mode,
        "widths": list(model.widths),
        "decoder_widths": list(model.decoder_widths),
        "frame_shape": list(model.frame_shape_),
        "loss_curve": model.loss_curve_,
        "epoch_types": model.epoch_types_,
    }
    Path(str(out) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"final loss {model.loss_curve_[-1]:.5f}; checkpoint {out}")
    return EXIT_OK


def cmd_predict(cfg: dict, dry_run: bool) -> int:
    from .model.data import clips_to_dataset
    from .model.estimator import AVSaliencyModel
    from .fixations import synth_dataset

    meta_path = Path(str(cfg["model"]) + ".json")
    if not Path(cfg["model"]).is_file() or not meta_path.is_file():
        raise SaliencyError(f"{cfg['model']}: checkpoint or its .json sidecar not found")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    spec, train_clips = _synth_setup(cfg)
    mode = cfg.get("mode") or meta["mode"]
    if mode != meta["mode"]:
        raise SaliencyError(f"checkpoint was trained in mode {meta['mode']}, not {mode}")
    model = AVSaliencyModel(mode=mode, widths=tuple(meta["widths"]), decoder_widths=tuple(meta["decoder_widths"]))
    model.load(cfg["model"], tuple(meta["frame_shape"]))
    if dry_run:
        return EXIT_OK
    clips = synth_dataset(spec)
    chosen = {"train": clips[:train_clips], "test": clips[train_clips:], "all": clips}[cfg["subset"]]
    if not chosen:
        raise DegenerateData(f"the {cfg['subset']} subset is empty")
    data, keys = clips_to_dataset(chosen, ViewingGeometry(cfg["geom"]), cfg["stride"], spec.fps)
    preds = dict(zip(keys, model.predict(data)))
    write_predictions(preds, cfg["out"])
    print(f"wrote {len(preds)} prediction maps to {cfg['out']}")
    return EXIT_OK


def cmd_report_temporal(cfg: dict, dry_run: bool) -> int:
    sets = _read_score_files(cfg["scores"])
    if dry_run:
        return EXIT_OK
    curves = {}
    for name, recs in sets.items():
        seqs: dict = {}
        for r in sorted(recs, key=lambda r: (r.video_id, r.frame_idx)):
            seqs.setdefault(r.video_id, []).append(getattr(r, cfg["metric"]))
        curves[name] = harness.temporal_profile(seqs, cfg["points"], cfg["smooth"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    names = list(curves)
    t = np.linspace(0.0, 1.0, cfg["points"])
    _write_csv(out / "temporal.csv", ["t", *names], ([_fmt(t[i]), *(_fmt(curves[n][i]) for n in names)] for i in range(t.size)))
    (out / "temporal.svg").write_text(harness.svg_line_plot(curves, f"{cfg['metric'].upper()} over time"), encoding="utf-8")
    return EXIT_OK


def _contextual_one(pred, fix, region, shape):
    from .core import resize_bilinear

    return harness.contextual_nss(resize_bilinear(pred, shape), fix, region)


def cmd_report_contextual(cfg: dict, dry_run: bool) -> int:
    preds = read_predictions(cfg["pred"])
    shape = _frame_shape(cfg, preds)
    fixations = _frames_for(read_fixations_csv(cfg["fix"]), shape)
    regions = harness.read_sources_csv(cfg["sources"])
    if dry_run:
        return EXIT_OK
    keys = [k for k in sorted(regions) if k in preds and k in fixations and len(fixations[k])]
    if not keys:
        raise DegenerateData("no annotated frame has both a prediction and fixations")
    items = [(preds[k], fixations[k], regions[k], shape) for k in keys]
    scores = _pool_map(_contextual_one, items, cfg["jobs"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows = [[k[0], k[1], _fmt(c.inside), _fmt(c.outside), _fmt(c.full), c.n_inside, c.n_outside] for k, c in zip(keys, scores)]
    _write_csv(out / "contextual.csv", ["video_id", "frame_idx", "in", "out", "full", "n_in", "n_out"], rows)

    def mean(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    summary = {part: mean(getattr(c, attr) for c in scores) for part, attr in (("in", "inside"), ("out", "outside"), ("full", "full"))}
    groups = {cfg["model_name"]: {k: v for k, v in summary.items() if v is not None}}
    (out / "contextual.svg").write_text(harness.svg_bar_chart(groups, "Contextual NSS"), encoding="utf-8")
    print(" ".join(f"{k}={v:.4f}" for k, v in summary.items() if v is not None) + f" frames={len(keys)}")
    return EXIT_OK


def cmd_report_categories(cfg: dict, dry_run: bool) -> int:
    sets = _read_score_files(cfg["scores"])
    cats = read_categories_csv(cfg["cats"])
    if dry_run:
        return EXIT_OK
    rows, groups = [], {}
    for name, recs in sets.items():
        report = harness.aggregate(recs, cats, 0, {"model": name})
        scopes = [("overall", report.overall)] + list(report.per_category.items())
        for scope, s in scopes:
            rows.append([name, scope, *(harness._fmt4(s.means[m]) for m in METRIC_NAMES), s.frames])
            if s.means[cfg["metric"]] is not None:
                groups.setdefault(scope, {})[name] = s.means[cfg["metric"]]
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "categories.csv", ["model", "scope", *METRIC_NAMES, "frames"], rows)
    (out / "categories.svg").write_text(harness.svg_bar_chart(groups, f"Mean {cfg['metric'].upper()} by category"), encoding="utf-8")
    return EXIT_OK


def cmd_report_histogram(cfg: dict, dry_run: bool) -> int:
    sets = _read_score_files(cfg["scores"])
    if len(sets) != 1:
        raise SaliencyError("report-histogram takes exactly one --scores file")
    if dry_run:
        return EXIT_OK
    (name, recs), = sets.items()
    hist = harness.score_histogram([getattr(r, cfg["metric"]) for r in recs], cfg["bins"], tuple(cfg["range"]))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows = [[_fmt(a), _fmt(b), int(c)] for a, b, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts)]
    _write_csv(out / "histogram.csv", ["bin_lo", "bin_hi", "count"], rows)
    (out / "histogram.svg").write_text(harness.svg_histogram(hist, f"{name}: {cfg['metric'].upper()} distribution"), encoding="utf-8")
    print(f"mean {cfg['metric']}={hist.mean:.4f}")
    return EXIT_OK


def cmd_report_improvement(cfg: dict, dry_run: bool) -> int:
    sets = _read_score_files(cfg["scores"])
    base = _read_score_files([cfg["baseline"]])
    if dry_run:
        return EXIT_OK
    (base_name, base_recs), = base.items()
    b = _metric_values(base_recs, cfg["metric"])
    result = {}
    for name, recs in sets.items():
        a = _metric_values(recs, cfg["metric"])
        keys = sorted(k for k in set(a) & set(b) if a[k] is not None and b[k] is not None)
        if not keys:
            raise DegenerateData(f"{name} and {base_name} share no scored frames")
        result[name] = harness.improvement_rate({k: a[k] for k in keys}, {k: b[k] for k in keys})
        print(f"{name} beats {base_name} on {result[name]:.2f}% of {len(keys)} frames")
    if cfg.get("out"):
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        doc = {"baseline": base_name, "metric": cfg["metric"], "improvement_percent": result}
        (out / "improvement.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


# --- parser -----------------------------------------------------------------

COMMON_DEFAULTS = {"seed": 0, "jobs": 1}

COMMANDS: dict[str, tuple[Callable, dict, str]] = {}


def _command(name, handler, defaults, help_text):
    COMMANDS[name] = (handler, {**COMMON_DEFAULTS, **defaults}, help_text)


_command("eval", cmd_eval, {"geom": 2.0, "model_name": "model", "size": None, "cats": None}, "score predictions against fixations")
_command("baseline-mep", cmd_baseline_mep, {"geom": 2.0, "size": None, "test_fix": None, "cats": None}, "mean eye position baseline")
_command("baseline-human-infinite", cmd_baseline_human_infinite, {"geom": 2.0, "size": None, "cats": None}, "split-half observer bound")
_command("audio-prep", cmd_audio_prep, {"out": None, "dump_mel": None}, "WAV to model audio tensor")
_command("train", cmd_train, {"geom": 2.0, "mode": "av", "synth_spec": None, **TRAIN_DEFAULTS}, "train a toy model on synthetic clips")
_command("predict", cmd_predict, {"geom": 2.0, "mode": None, "synth_spec": None, "stride": 16, "subset": "test"}, "write prediction maps")
_command("synth", cmd_synth, {"synth_spec": None}, "generate a synthetic audio-visual corpus")
_command("report-temporal", cmd_report_temporal, {"metric": "nss", "points": 1000, "smooth": 25}, "score over normalised time")
_command("report-contextual", cmd_report_contextual, {"size": None, "model_name": "model"}, "NSS at, away from and around sound sources")
_command("report-categories", cmd_report_categories, {"metric": "nss"}, "per-category score table")
_command("report-histogram", cmd_report_histogram, {"metric": "nss", "bins": 20, "range": (-2.0, 6.0)}, "score distribution")
_command("report-improvement", cmd_report_improvement, {"metric": "nss", "out": None}, "percentage of frames beating a baseline")

_REQUIRED = {
    "eval": ("pred", "fix", "out"),
    "baseline-mep": ("fix", "out"),
    "baseline-human-infinite": ("fix", "out"),
    "audio-prep": ("audio",),
    "train": ("out",),
    "predict": ("model", "out"),
    "synth": ("out",),
    "report-temporal": ("scores", "out"),
    "report-contextual": ("pred", "fix", "sources", "out"),
    "report-categories": ("scores", "cats", "out"),
    "report-histogram": ("scores", "out"),
    "report-improvement": ("scores", "baseline"),
}

_FLAGS = {
    "pred": dict(help="prediction root: <pred>/<video>/<frame:06d>.smf"),
    "fix": dict(help="fixation CSV"),
    "test_fix": dict(flag="--test-fix", help="fixation CSV of frames to score the baseline on"),
    "cats": dict(help="category CSV"),
    "geom": dict(type=_positive(float), help="pixels per degree of visual angle"),
    "size": dict(type=_size, help="frame size HxW of the fixation grid"),
    "out": dict(help="output path"),
    "mode": dict(choices=["av", "video", "audio"]),
    "synth_spec": dict(flag="--synth-spec", help="synthetic corpus spec (key = value lines)"),
    "sources": dict(help="sound-source CSV"),
    "dump_mel": dict(flag="--dump-mel", help="also write the log-mel spectrogram as SMF"),
    "audio": dict(help="input WAV file"),
    "model": dict(help="DVCK checkpoint"),
    "model_name": dict(flag="--model-name", help="label used in reports"),
    "scores": dict(action="append", help="per-frame score CSV, optionally NAME=PATH; repeatable"),
    "baseline": dict(help="baseline per-frame score CSV"),
    "metric": dict(choices=list(METRIC_NAMES)),
    "bins": dict(type=_positive(int)),
    "range": dict(type=_range, help="LO:HI"),
    "points": dict(type=_positive(int)),
    "smooth": dict(type=int, help="moving-average window (0 disables)"),
    "batch_size": dict(flag="--batch-size", type=_positive(int)),
    "lr": dict(type=_positive(float)),
    "epochs": dict(type=_positive(int)),
    "widths": dict(type=_ints, help="five encoder stage widths"),
    "decoder_widths": dict(flag="--decoder-widths", type=_ints),
    "stride": dict(type=_positive(int), help="frame stride between 16-frame segments"),
    "image_clips": dict(flag="--image-clips", type=int, help="extra clips used as static images"),
    "subset": dict(choices=["train", "test", "all"]),
}


def build_parser() -> _Parser:
    parser = _Parser(prog="avsaliency", description="Audio-visual saliency toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, (_, defaults, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--seed", type=int, help="master seed (default 0)")
        p.add_argument("--jobs", type=_positive(int), help="worker processes (default 1)")
        p.add_argument("--config", help="key = value file; flags take precedence")
        p.add_argument("--dry-run", action="store_true", help="validate inputs and write nothing")
        for dest in sorted((set(defaults) | set(_REQUIRED[name])) - set(COMMON_DEFAULTS)):
            spec = dict(_FLAGS[dest])
            flag = spec.pop("flag", "--" + dest.replace("_", "-"))
            p.add_argument(flag, dest=dest, **spec)
    return parser


def _read_config_file(path, parser: argparse.ArgumentParser) -> dict:
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config", "dry_run")}
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        key = key.replace("-", "_")
        if not sep:
            raise SaliencyError(f"{path}:{lineno}: expected key = value")
        if key not in actions:
            raise SaliencyError(f"{path}:{lineno}: unknown key {key!r}")
        action = actions[key]
        try:
            v = action.type(value) if action.type else value
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise SaliencyError(f"{path}:{lineno}: {exc}") from None
        if action.choices and v not in action.choices:
            raise SaliencyError(f"{path}:{lineno}: {key} must be one of {list(action.choices)}")
        out[key] = [v] if isinstance(action, argparse._AppendAction) else v
    return out


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        handler, defaults, _ = COMMANDS[ns.command]
        given = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "dry_run")}
        sub = parser._subparsers._group_actions[0].choices[ns.command]
        from_file = _read_config_file(ns.config, sub) if getattr(ns, "config", None) else {}
        cfg = {**defaults, **from_file, **given}
        missing = [d for d in _REQUIRED[ns.command] if cfg.get(d) is None]
        if missing:
            sub.error("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
        dry_run = getattr(ns, "dry_run", False)
        effective = {"command": ns.command, "dry_run": dry_run, **{k: _jsonable(v) for k, v in cfg.items()}}
        print(json.dumps(effective, sort_keys=True))
        sys.stdout.flush()
        return handler(cfg, dry_run)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except DEGENERATE_ERRORS as exc:
        print(f"error: degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (SaliencyError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
