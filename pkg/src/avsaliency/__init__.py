"""Audio-visual saliency prediction and evaluation for dynamic scenes.

The torch model lives in :mod:`avsaliency.model` and is imported lazily so
that evaluation and baseline tools stay light.
"""

from .core import (
    FixationFrame,
    FixationRecord,
    SaliencyError,
    VideoCategory,
    ViewingGeometry,
    read_map,
    write_map,
)
from .fixations import DensityMapTransformer, MEPBaseline, density_map, human_infinite
from .harness import aggregate, eval_frames
from .metrics import ScoreRecord, anova_oneway, auc_judd, cc, kl_div, nss, sauc, sim

__version__ = "0.1.0"

__all__ = [
    "DensityMapTransformer",
    "FixationFrame",
    "FixationRecord",
    "MEPBaseline",
    "SaliencyError",
    "ScoreRecord",
    "VideoCategory",
    "ViewingGeometry",
    "aggregate",
    "anova_oneway",
    "auc_judd",
    "cc",
    "density_map",
    "eval_frames",
    "human_infinite",
    "kl_div",
    "nss",
    "read_map",
    "sauc",
    "sim",
    "write_map",
]
