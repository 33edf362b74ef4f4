"""Turning synthetic clips into model-ready arrays."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..audio import PcmSignal, audio_tensor
from ..core import ViewingGeometry
from ..fixations import SynthClip, area_downsample, density_map
from .network import N_FRAMES, OUTPUT_REDUCTION
from .training import AVDataset

DEFAULT_MEAN = (0.45, 0.45, 0.45)
DEFAULT_STD = (0.225, 0.225, 0.225)


def normalize_frames(frames: np.ndarray, mean=DEFAULT_MEAN, std=DEFAULT_STD) -> np.ndarray:
    """Per-channel standardisation of ``(..., 3, H, W)`` frames."""
    mean = np.asarray(mean, dtype=np.float32)[:, None, None]
    std = np.asarray(std, dtype=np.float32)[:, None, None]
    return ((np.asarray(frames, dtype=np.float32) - mean) / std).astype(np.float32)


def segment_target(clip: SynthClip, frame_idx: int, geometry: ViewingGeometry) -> np.ndarray:
    """Density of one frame, block-averaged to the model output resolution."""
    return area_downsample(density_map(clip.fixation_frame(frame_idx), geometry), OUTPUT_REDUCTION)


def segment_starts(n_frames: int, stride: int) -> list[int]:
    if n_frames < N_FRAMES:
        raise ValueError(f"clip has {n_frames} frames, need at least {N_FRAMES}")
    return list(range(0, n_frames - N_FRAMES + 1, stride))


def segment_audio(clip: SynthClip, start: int, fps: float) -> PcmSignal:
    """Audio samples aligned with frames ``start .. start + 15``."""
    per_frame = clip.sample_rate / fps
    a = int(round(start * per_frame))
    b = int(round((start + N_FRAMES) * per_frame))
    return PcmSignal(clip.audio[a:b], clip.sample_rate)


def clips_to_dataset(
    clips: Sequence[SynthClip],
    geometry: ViewingGeometry = ViewingGeometry(2.0),
    stride: int = N_FRAMES,
    fps: float = 25.0,
    mean=DEFAULT_MEAN,
    std=DEFAULT_STD,
) -> tuple[AVDataset, list[tuple[str, int]]]:
    """Cut clips into 16-frame segments, each supervised by its last frame.

    Returns the dataset and the ``(video_id, frame_idx)`` key of every
    segment's supervising frame.
    """
    videos, audios, targets, keys = [], [], [], []
    for clip in clips:
        for start in segment_starts(clip.frames.shape[0], stride):
            last = start + N_FRAMES - 1
            videos.append(normalize_frames(clip.frames[start : start + N_FRAMES], mean, std))
            audios.append(audio_tensor(segment_audio(clip, start, fps)))
            targets.append(segment_target(clip, last, geometry))
            keys.append((clip.video_id, last))
    data = AVDataset(np.stack(videos), np.stack(audios), np.stack(targets).astype(np.float32))
    return data, keys
