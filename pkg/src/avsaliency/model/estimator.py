"""Scikit-learn style wrapper around :class:`SaliencyNet`."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ..core import SaliencyError
from . import checkpoint
from .network import (
    FULL_BLOCKS,
    FULL_DECODER,
    FULL_WIDTHS,
    SPATIAL_REDUCTION,
    TOY_DECODER,
    TOY_WIDTHS,
    Mode,
    SaliencyNet,
    init_params,
)
from .training import AVDataset, ImageDataset, TrainConfig, train

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


class AVSaliencyModel(BaseEstimator):
    """Audio-visual (or single-modality) saliency predictor.

    ``fit`` takes an :class:`AVDataset` and optionally an
    :class:`ImageDataset` of static images for the alternating image epochs.
    ``predict`` returns one distribution of shape ``(H/8, W/8)`` per clip.

    Parameters
    ----------
    mode : {"av", "video", "audio"}
    widths : stage widths shared by both encoders.
    full : use ResNet-18-like block counts and widths instead of ``widths``.
    """

    def __init__(
        self,
        mode: str = "av",
        widths: Sequence[int] = TOY_WIDTHS,
        decoder_widths: Sequence[int] = TOY_DECODER,
        full: bool = False,
        batch_size: int = 10,
        learning_rate: float = 1e-3,
        epochs: int = 10,
        seed: int = 0,
        dtype: str = "float32",
    ):
        self.mode = mode
        self.widths = widths
        self.decoder_widths = decoder_widths
        self.full = full
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed
        self.dtype = dtype

    def _build(self, frame_shape: tuple[int, int]) -> SaliencyNet:
        h, w = frame_shape
        if h % SPATIAL_REDUCTION or w % SPATIAL_REDUCTION:
            raise SaliencyError(f"frame size {h}x{w} is not divisible by {SPATIAL_REDUCTION}")
        grid = (h // SPATIAL_REDUCTION, w // SPATIAL_REDUCTION)
        if self.full:
            net = SaliencyNet(FULL_WIDTHS, FULL_WIDTHS, FULL_DECODER, FULL_BLOCKS, grid)
        else:
            net = SaliencyNet(tuple(self.widths), tuple(self.widths), tuple(self.decoder_widths), None, grid)
        net = net.to(_DTYPES[self.dtype])
        init_params(net, self.seed)
        return net

    def initialize(self, frame_shape: tuple[int, int]) -> "AVSaliencyModel":
        """Build freshly initialised weights without training."""
        self.network_ = self._build(frame_shape)
        self.frame_shape_ = tuple(frame_shape)
        return self

    def fit(self, X: AVDataset, y=None, image_data: Optional[ImageDataset] = None):
        frame_shape = tuple(X.clips.shape[-2:]) if X is not None and len(X) else tuple(image_data.images.shape[-2:])
        self.initialize(frame_shape)
        config = TrainConfig(
            batch_size=self.batch_size,
            lr=self.learning_rate,
            epochs=self.epochs,
            seed=self.seed,
            mode=self.mode,
        )
        result = train(self.network_, X, image_data, config, Mode(self.mode))
        self.loss_curve_ = result.loss_curve
        self.epoch_types_ = [p.value for p in result.epoch_types]
        return self

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("call fit() or load() first")

    def predict(self, X: AVDataset, batch_size: int = 32) -> np.ndarray:
        self._check_fitted()
        net = self.network_
        dtype = next(net.parameters()).dtype
        net.eval()
        outs = []
        with torch.no_grad():
            for start in range(0, len(X), batch_size):
                sl = slice(start, start + batch_size)
                clips = torch.as_tensor(X.clips[sl], dtype=dtype) if self.mode != "audio" else None
                audio = torch.as_tensor(X.audio[sl], dtype=dtype) if self.mode != "video" else None
                outs.append(net(clips, audio, self.mode).double().numpy())
        pred = np.concatenate(outs)
        return pred / pred.sum(axis=(1, 2), keepdims=True)

    def save(self, path) -> None:
        self._check_fitted()
        checkpoint.save_checkpoint(self.network_, path)

    def load(self, path, frame_shape: tuple[int, int]) -> "AVSaliencyModel":
        self.initialize(frame_shape)
        checkpoint.load_checkpoint(self.network_, path)
        return self
