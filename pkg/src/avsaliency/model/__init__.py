from .checkpoint import load_checkpoint, save_checkpoint
from .estimator import AVSaliencyModel
from .network import Mode, SaliencyNet, init_params
from .training import AVDataset, ImageDataset, TrainConfig, train, train_step

__all__ = [
    "AVDataset",
    "AVSaliencyModel",
    "ImageDataset",
    "Mode",
    "SaliencyNet",
    "TrainConfig",
    "init_params",
    "load_checkpoint",
    "save_checkpoint",
    "train",
    "train_step",
]
