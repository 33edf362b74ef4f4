"""Desk-scale modality experiment on synthetic two-blob clips.

Each clip shows two equally bright blobs of different colours; only the
audio tone tells which one most observers watch. A video-only model can at
best split its mass between the blobs, so an audio-visual model should beat
it, and an audio-only model (no spatial input) should trail both.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import harness, metrics
from .core import ViewingGeometry
from .fixations import SynthClip, SynthClipSpec, synth_dataset
from .metrics import ScoreRecord
from .model.data import clips_to_dataset
from .model.estimator import AVSaliencyModel

logger = logging.getLogger(__name__)

MODES = ("av", "video", "audio")


@dataclass
class ExperimentConfig:
    n_clips: int = 60
    n_train: int = 40
    frames: int = 96
    segment_stride: int = 4
    epochs: int = 10
    batch_size: int = 10
    learning_rate: float = 1e-3
    widths: tuple[int, ...] = (8, 16, 16, 32, 32)
    decoder_widths: tuple[int, int] = (16, 16)
    pixels_per_degree: float = 2.0
    distractor_fraction: float = 0.1
    seed: int = 5


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    test_clips: list[SynthClip]
    keys: list[tuple[str, int]]
    predictions: dict[str, np.ndarray]
    records: dict[str, list[ScoreRecord]]
    loss_curves: dict[str, list[float]]
    models: dict[str, AVSaliencyModel] = field(default_factory=dict)

    def nss(self, mode: str) -> np.ndarray:
        return np.array([r.nss for r in self.records[mode]], dtype=np.float64)

    def mean_nss(self, mode: str) -> float:
        return float(np.mean(self.nss(mode)))

    def anova(self, modes=MODES) -> tuple[float, float]:
        return metrics.anova_oneway([self.nss(m) for m in modes])


def run_modality_experiment(config: ExperimentConfig = ExperimentConfig(), modes=MODES) -> ExperimentResult:
    ss = np.random.SeedSequence(config.seed)
    data_seed, init_seed, neg_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    spec = SynthClipSpec(
        frames=config.frames, n_clips=config.n_clips, distractor_fraction=config.distractor_fraction, seed=data_seed
    )
    clips = synth_dataset(spec)
    geometry = ViewingGeometry(config.pixels_per_degree)
    train_data, _ = clips_to_dataset(clips[: config.n_train], geometry, config.segment_stride, spec.fps)
    test_clips = clips[config.n_train :]
    test_data, keys = clips_to_dataset(test_clips, geometry, config.segment_stride, spec.fps)

    by_id = {c.video_id: c for c in test_clips}
    fixations = {k: by_id[k[0]].fixation_frame(k[1]) for k in keys}
    negatives = harness.shuffled_negatives(fixations, neg_seed)

    result = ExperimentResult(config, test_clips, keys, {}, {}, {})
    for mode in modes:
        model = AVSaliencyModel(
            mode=mode,
            widths=config.widths,
            decoder_widths=config.decoder_widths,
            batch_size=config.batch_size,
            learning_rate=config.learning_rate,
            epochs=config.epochs,
            seed=init_seed,
        ).fit(train_data)
        pred = model.predict(test_data)
        preds = {k: p for k, p in zip(keys, pred)}
        records, _ = harness.eval_frames(preds, fixations, negatives=negatives, geometry=geometry)
        result.predictions[mode] = pred
        result.records[mode] = records
        result.loss_curves[mode] = model.loss_curve_
        result.models[mode] = model
        logger.info("%s: mean NSS %.4f", mode, float(np.mean([r.nss for r in records])))
    return result


def contextual_scores(result: ExperimentResult, mode: str = "av") -> list[harness.ContextualScore]:
    """Contextual NSS of every test frame, the target blob box as source region."""
    from .core import resize_bilinear

    by_id = {c.video_id: c for c in result.test_clips}
    out = []
    for (vid, frame), pred in zip(result.keys, result.predictions[mode]):
        clip = by_id[vid]
        fix = clip.fixation_frame(frame)
        x0, y0, x1, y1 = clip.boxes[frame]
        region = harness.SourceRegion(vid, frame, x0, y0, x1, y1)
        out.append(harness.contextual_nss(resize_bilinear(pred, fix.shape), fix, region))
    return out
