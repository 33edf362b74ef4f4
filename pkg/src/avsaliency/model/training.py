"""KL loss, path-selected training steps and the alternating training loop."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from ..core import SaliencyError
from ..metrics import KL_EPS
from .network import N_FRAMES, Mode, SaliencyNet

logger = logging.getLogger(__name__)


class PathSelection(str, enum.Enum):
    AUDIO_VISUAL = "audio_visual"
    IMAGE_ONLY = "image_only"


FROZEN_ON_IMAGES = ("audio_encoder", "mixer")


@dataclass
class TrainConfig:
    batch_size: int = 10
    lr: float = 1e-3
    epochs: int = 10
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    widths: tuple[int, ...] = (8, 16, 32, 64, 64)
    mode: str = "av"

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or not self.lr > 0:
            raise SaliencyError("batch_size, epochs and lr must be positive")
        self.widths = tuple(int(w) for w in self.widths)
        Mode(self.mode)


def read_train_config(path) -> TrainConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    kwargs = {}
    known = {f.name for f in fields(TrainConfig)}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SaliencyError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise SaliencyError(f"{path}:{lineno}: unknown key {key!r}")
        if key in ("batch_size", "epochs", "seed"):
            kwargs[key] = int(value)
        elif key in ("lr", "eps"):
            kwargs[key] = float(value)
        elif key == "widths":
            kwargs[key] = tuple(int(v) for v in value.split(","))
        elif key == "betas":
            kwargs[key] = tuple(float(v) for v in value.split(","))
        else:
            kwargs[key] = value
    return TrainConfig(**kwargs)


def kl_loss(pred: torch.Tensor, target: torch.Tensor, eps: float = KL_EPS) -> torch.Tensor:
    """Batch mean of sum_x G(x) log((G(x) + eps) / (S(x) + eps))."""
    terms = target * torch.log((target + eps) / (pred + eps))
    return terms.flatten(1).sum(dim=1).mean()


@dataclass
class Batch:
    """One training batch. ``audio`` is ``None`` for static-image batches."""

    clips: torch.Tensor
    targets: torch.Tensor
    audio: Optional[torch.Tensor] = None


def replicate_images(images: torch.Tensor) -> torch.Tensor:
    """``(N, 3, H, W)`` stills to ``(N, 16, 3, H, W)`` volumes."""
    return images[:, None].expand(-1, N_FRAMES, -1, -1, -1).contiguous()


def make_optimizer(net: SaliencyNet, config: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(net.parameters(), lr=config.lr, betas=config.betas, eps=config.eps)


def train_step(
    net: SaliencyNet,
    optimizer: torch.optim.Optimizer,
    batch: Batch,
    path: PathSelection,
    mode: Mode = Mode.AV,
) -> float:
    """One Adam update through the selected path; returns the batch loss.

    On the image-only path the audio encoder and mixer never run, so their
    gradients stay ``None`` and Adam leaves them and their moments untouched;
    their batch-norm statistics are likewise not updated.
    """
    if batch.clips.shape[0] == 0:
        raise SaliencyError("empty batch")
    path = PathSelection(path)
    net.train()
    optimizer.zero_grad(set_to_none=True)
    if path is PathSelection.IMAGE_ONLY or mode is Mode.VIDEO:
        pred = net(batch.clips, None, Mode.VIDEO)
    else:
        if batch.audio is None:
            raise SaliencyError("audio-visual step needs audio")
        pred = net(batch.clips, batch.audio, mode)
    loss = kl_loss(pred, batch.targets)
    loss.backward()
    if path is PathSelection.IMAGE_ONLY:
        groups = net.parameter_groups()
        for name in FROZEN_ON_IMAGES:
            for p in groups[name]:
                p.grad = None
    optimizer.step()
    return float(loss.detach())


@dataclass
class AVDataset:
    clips: np.ndarray  # (N, 16, 3, H, W), already normalised
    audio: np.ndarray  # (N, 16, 3, 64, 64)
    targets: np.ndarray  # (N, H/8, W/8)

    def __len__(self):
        return self.clips.shape[0]


@dataclass
class ImageDataset:
    images: np.ndarray  # (N, 3, H, W), already normalised
    targets: np.ndarray

    def __len__(self):
        return self.images.shape[0]


@dataclass
class TrainResult:
    loss_curve: list[float] = field(default_factory=list)
    epoch_types: list[PathSelection] = field(default_factory=list)


def epoch_schedule(epochs: int, has_av: bool, has_images: bool) -> list[PathSelection]:
    """Alternate audio-visual and image epochs, starting audio-visual."""
    if not has_av and not has_images:
        raise SaliencyError("both datasets are empty")
    if not has_images:
        logger.warning("no static-image data; every epoch is audio-visual")
        return [PathSelection.AUDIO_VISUAL] * epochs
    if not has_av:
        logger.warning("no audio-visual data; every epoch is image-only")
        return [PathSelection.IMAGE_ONLY] * epochs
    return [PathSelection.AUDIO_VISUAL if e % 2 == 0 else PathSelection.IMAGE_ONLY for e in range(epochs)]


def train(
    net: SaliencyNet,
    av_data: Optional[AVDataset],
    image_data: Optional[ImageDataset],
    config: TrainConfig,
    mode: Mode = Mode.AV,
) -> TrainResult:
    """Alternating-epoch training; returns the mean loss of every epoch."""
    mode = Mode(mode)
    dtype = next(net.parameters()).dtype
    has_av = av_data is not None and len(av_data) > 0
    has_img = image_data is not None and len(image_data) > 0 and mode is not Mode.AUDIO
    schedule = epoch_schedule(config.epochs, has_av, has_img)
    optimizer = make_optimizer(net, config)
    shuffle = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    result = TrainResult()
    for path in schedule:
        data = av_data if path is PathSelection.AUDIO_VISUAL else image_data
        order = shuffle.permutation(len(data))
        losses, weights = [], []
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            targets = torch.as_tensor(data.targets[idx], dtype=dtype)
            if path is PathSelection.AUDIO_VISUAL:
                batch = Batch(
                    torch.as_tensor(data.clips[idx], dtype=dtype),
                    targets,
                    torch.as_tensor(data.audio[idx], dtype=dtype),
                )
            else:
                batch = Batch(replicate_images(torch.as_tensor(data.images[idx], dtype=dtype)), targets)
            losses.append(train_step(net, optimizer, batch, path, mode))
            weights.append(len(idx))
        result.loss_curve.append(float(np.average(losses, weights=weights)))
        result.epoch_types.append(path)
        logger.info("epoch %d (%s): loss %.5f", len(result.loss_curve), path.value, result.loss_curve[-1])
    return result
