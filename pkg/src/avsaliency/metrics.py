"""Saliency evaluation scores, the KL training loss and one-way ANOVA.

All scores follow the usual fixation-benchmark definitions:

* NSS: mean z-scored saliency at fixated pixels.
* CC: Pearson correlation between prediction and ground-truth density.
* SIM: histogram intersection of two distributions.
* AUC-Judd: ROC area with every non-fixated pixel as a negative.
* sAUC: ROC area with fixations from other frames as negatives.

Standard deviations are population statistics (no Bessel correction) and
ROC thresholds use ``>=``, so a constant map scores an AUC of exactly 0.5.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .core import (
    EmptyFixations,
    FixationFrame,
    SaliencyError,
    UnnormalizedInput,
    ZeroVariance,
    check_distribution,
    check_map,
)

KL_EPS = 1e-8
METRIC_NAMES = ("nss", "auc_judd", "sauc", "cc", "sim")


class DegenerateNegatives(SaliencyError):
    pass


class EmptyNegatives(SaliencyError):
    pass


class DegenerateWithinVariance(RuntimeWarning):
    """All groups are internally constant but their means differ."""


@dataclass(frozen=True)
class ScoreRecord:
    video_id: str
    frame_idx: int
    nss: Optional[float] = None
    auc_judd: Optional[float] = None
    sauc: Optional[float] = None
    cc: Optional[float] = None
    sim: Optional[float] = None

    def scores(self) -> dict[str, Optional[float]]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name in METRIC_NAMES}


def _check_pair(S: FixationFrame, smap: np.ndarray):
    if smap.shape != S.shape:
        raise SaliencyError(f"map shape {smap.shape} does not match fixation frame {S.shape}")


def _zscore(smap: np.ndarray) -> np.ndarray:
    mu = smap.mean()
    sigma = smap.std()
    if not sigma > 0:
        raise ZeroVariance("saliency map has zero variance")
    return (smap - mu) / sigma


def nss(saliency, fixations: FixationFrame) -> float:
    smap = check_map(saliency, "saliency")
    _check_pair(fixations, smap)
    if len(fixations) == 0:
        raise EmptyFixations("NSS needs at least one fixation")
    z = _zscore(smap)
    rows, cols = fixations.coords()
    return float(z[rows, cols].mean())


def cc(saliency, density) -> float:
    s = check_map(saliency, "saliency")
    g = check_map(density, "density")
    if s.shape != g.shape:
        raise SaliencyError(f"shape mismatch {s.shape} vs {g.shape}")
    ds = s - s.mean()
    dg = g - g.mean()
    sd_s = math.sqrt(np.mean(ds * ds))
    sd_g = math.sqrt(np.mean(dg * dg))
    if sd_s == 0 or sd_g == 0:
        raise ZeroVariance("CC is undefined for a constant map")
    return float(np.mean(ds * dg) / (sd_s * sd_g))


def sim(saliency, density) -> float:
    s = check_distribution(saliency, "saliency")
    g = check_distribution(density, "density")
    if s.shape != g.shape:
        raise SaliencyError(f"shape mismatch {s.shape} vs {g.shape}")
    return float(np.minimum(s, g).sum())


def kl_div(saliency, density, eps: float = KL_EPS) -> float:
    """KL divergence of the prediction from the ground truth, natural log."""
    s = check_distribution(saliency, "saliency")
    g = check_distribution(density, "density")
    if s.shape != g.shape:
        raise SaliencyError(f"shape mismatch {s.shape} vs {g.shape}")
    return float(np.sum(g * np.log((g + eps) / (s + eps))))


def roc_area(positives: np.ndarray, negatives: np.ndarray) -> float:
    """Trapezoidal ROC area with thresholds at the positive values.

    Each distinct positive value ``t`` contributes the point
    ``(P(neg >= t), P(pos >= t))``; the curve is closed with (0, 0) and (1, 1).
    """
    pos = np.asarray(positives, dtype=np.float64)
    neg = np.sort(np.asarray(negatives, dtype=np.float64))
    thresholds = np.unique(pos)[::-1]
    pos_sorted = np.sort(pos)
    tp = (pos.size - np.searchsorted(pos_sorted, thresholds, side="left")) / pos.size
    fp = (neg.size - np.searchsorted(neg, thresholds, side="left")) / neg.size
    tpr = np.concatenate(([0.0], tp, [1.0]))
    fpr = np.concatenate(([0.0], fp, [1.0]))
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)


def auc_judd(saliency, fixations: FixationFrame) -> float:
    smap = check_map(saliency, "saliency")
    _check_pair(fixations, smap)
    if len(fixations) == 0:
        raise EmptyFixations("AUC-Judd needs at least one fixation")
    mask = np.zeros(smap.shape, dtype=bool)
    mask[fixations.coords()] = True
    if mask.all():
        raise DegenerateNegatives("every pixel is fixated; no negatives remain")
    return roc_area(smap[mask], smap[~mask])


def sauc(saliency, fixations: FixationFrame, negatives: FixationFrame) -> float:
    """Shuffled AUC; negatives coinciding with a positive are dropped first."""
    smap = check_map(saliency, "saliency")
    _check_pair(fixations, smap)
    _check_pair(negatives, smap)
    if len(fixations) == 0:
        raise EmptyFixations("sAUC needs at least one fixation")
    positive_set = set(fixations.points)
    neg_pts = [p for p in negatives.points if p not in positive_set]
    if not neg_pts:
        raise EmptyNegatives("no negatives left after removing fixated pixels")
    nr, nc = np.asarray(neg_pts, dtype=np.intp).T
    return roc_area(smap[fixations.coords()], smap[nr, nc])


# --- one-way ANOVA ----------------------------------------------------------


def _betacf(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 10000) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail probability of the F distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


def anova_oneway(groups: Sequence[Sequence[float]]) -> tuple[float, float]:
    """One-way ANOVA F statistic and p-value.

    When every group is internally constant but the means differ, the
    statistic is infinite; a :class:`DegenerateWithinVariance` warning is
    emitted and ``(inf, 0.0)`` returned.
    """
    arrays = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(arrays) < 2:
        raise SaliencyError("ANOVA needs at least two groups")
    if any(a.size < 2 for a in arrays):
        raise SaliencyError("each ANOVA group needs at least two samples")
    k = len(arrays)
    n = sum(a.size for a in arrays)
    grand = np.concatenate(arrays).mean()
    ss_between = sum(a.size * (a.mean() - grand) ** 2 for a in arrays)
    ss_within = sum(np.sum((a - a.mean()) ** 2) for a in arrays)
    df1, df2 = k - 1, n - k
    if ss_within == 0:
        if ss_between == 0:
            return 0.0, 1.0
        warnings.warn("within-group variance is zero with unequal means", DegenerateWithinVariance)
        return math.inf, 0.0
    f = (ss_between / df1) / (ss_within / df2)
    return float(f), f_sf(f, df1, df2)
