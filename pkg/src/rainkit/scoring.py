"""Verification scores: MAE and CRPS maps, CRPS skill, precision/recall/F1, bias bins, chi-square."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .easyuq import DiscreteCDF, crps_discrete
from .special import chi2_sf

# Inner edges of the six bias bins (-inf,-1], (-1,-0.1], (-0.1,0], (0,0.1], (0.1,1], (1,inf).
BIAS_EDGES = (-1.0, -0.1, 0.0, 0.1, 1.0)
BIAS_LABELS = ("(-inf,-1]", "(-1,-0.1]", "(-0.1,0]", "(0,0.1]", "(0.1,1]", "(1,inf)")


class AlignmentError(ValueError):
    pass


@dataclass
class ScoreMap:
    values: np.ndarray  # (H, W)
    valid: np.ndarray | None = None  # pixels included in the summary; all when None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.valid is None:
            self.valid = np.isfinite(self.values)

    @property
    def mean(self) -> float:
        return float(self.values[self.valid].mean())

    @property
    def sd(self) -> float:
        return float(self.values[self.valid].std())

    def summary(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "n_pixels": int(self.valid.sum())}


def _check_aligned(forecasts: np.ndarray, truths: np.ndarray) -> None:
    if forecasts.shape != truths.shape or forecasts.ndim != 3:
        raise AlignmentError(f"forecasts {forecasts.shape} and truths {truths.shape} must be matching (T, H, W)")


def mae_map(forecasts, truths) -> ScoreMap:
    f = np.asarray(forecasts, dtype=np.float64)
    y = np.asarray(truths, dtype=np.float64)
    _check_aligned(f, y)
    return ScoreMap(np.abs(f - y).mean(axis=0))


def crps_map(cdfs: Sequence[Sequence[Sequence[DiscreteCDF]]], truths) -> ScoreMap:
    """Mean CRPS per pixel; ``cdfs[t][i][j]`` is the forecast for date t at pixel (i, j)."""
    y = np.asarray(truths, dtype=np.float64)
    if len(cdfs) != y.shape[0]:
        raise AlignmentError("one CDF grid per date is required")
    total = np.zeros(y.shape[1:])
    for t, grid in enumerate(cdfs):
        if len(grid) != y.shape[1] or any(len(row) != y.shape[2] for row in grid):
            raise AlignmentError(f"CDF grid for date index {t} does not match the truth grid")
        for i, row in enumerate(grid):
            for j, cdf in enumerate(row):
                total[i, j] += crps_discrete(cdf, y[t, i, j])
    return ScoreMap(total / y.shape[0])


def crps_map_from_scores(scores) -> ScoreMap:
    """Pixel means of precomputed per-date CRPS values (T, H, W)."""
    return ScoreMap(np.asarray(scores, dtype=np.float64).mean(axis=0))


@dataclass
class SkillMap:
    skill: ScoreMap
    ternary: np.ndarray  # int8 in {-1, 0, 1}; 0 also at flagged pixels
    flagged: np.ndarray  # pixels whose reference CRPS is zero


def skill_map(model: ScoreMap, clim: ScoreMap) -> SkillMap:
    """Relative CRPS improvement over the climatology reference, per pixel."""
    m = np.asarray(model.values, dtype=np.float64)
    c = np.asarray(clim.values, dtype=np.float64)
    if m.shape != c.shape:
        raise AlignmentError("model and reference maps differ in shape")
    flagged = ~(c > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        skill = np.where(flagged, np.nan, (c - m) / np.where(flagged, 1.0, c))
    ternary = np.where(flagged, 0, np.sign(np.nan_to_num(skill))).astype(np.int8)
    return SkillMap(ScoreMap(skill, valid=~flagged), ternary, flagged)


# ---------------------------------------------------------------------------
# event detection


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class PRF1:
    precision: np.ndarray  # (H, W), NaN where undefined
    recall: np.ndarray
    f1: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    P: float
    R: float
    F1: float
    undefined: dict = field(default_factory=dict)  # excluded pixel counts per statistic


def prf1(forecasts, truths, tau: float) -> PRF1:
    """Per-pixel precision/recall/F1 for events ``|value| > tau`` and their pixel averages.

    Averages are taken over pixels where the statistic is defined.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    f = np.asarray(forecasts, dtype=np.float64)
    y = np.asarray(truths, dtype=np.float64)
    _check_aligned(f, y)
    fe = np.abs(f) > tau
    ye = np.abs(y) > tau
    tp = (fe & ye).sum(axis=0)
    fp = (fe & ~ye).sum(axis=0)
    fn = (~fe & ye).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(tp + fp > 0, tp / (tp + fp), np.nan)
        r = np.where(tp + fn > 0, tp / (tp + fn), np.nan)
        f1 = np.where(p + r > 0, 2 * p * r / (p + r), 0.0)
    f1 = np.where(np.isnan(p) | np.isnan(r), np.nan, f1)

    def avg(a):
        ok = ~np.isnan(a)
        return float(a[ok].mean()) if ok.any() else float("nan")

    undefined = {name: int(np.isnan(a).sum()) for name, a in (("precision", p), ("recall", r), ("f1", f1))}
    return PRF1(p, r, f1, tp, fp, fn, avg(p), avg(r), avg(f1), undefined)


# ---------------------------------------------------------------------------
# bias histogram and homogeneity test


@dataclass
class BiasHistogram:
    counts: np.ndarray  # (6,) int

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def proportions(self) -> np.ndarray:
        return self.counts / self.counts.sum()


def bias_bin(bias) -> np.ndarray:
    """Bin index 0..5 of each bias value (left-open, right-closed intervals)."""
    return np.searchsorted(np.asarray(BIAS_EDGES), np.asarray(bias, dtype=np.float64), side="left")


def bias_histogram(forecasts, truths) -> BiasHistogram:
    f = np.asarray(forecasts, dtype=np.float64)
    y = np.asarray(truths, dtype=np.float64)
    if f.shape != y.shape:
        raise AlignmentError("forecasts and truths differ in shape")
    counts = np.bincount(bias_bin(f - y).ravel(), minlength=len(BIAS_LABELS))
    return BiasHistogram(counts.astype(np.int64))


def chi2_homogeneity(a, b) -> tuple[float, float]:
    """Homogeneity statistic ``sum (Na - Nb)^2 / (Na + Nb)`` and its chi-square p-value.

    Accepts BiasHistograms or raw count vectors over identical bins.
    Degrees of freedom are ``bins - 1``.
    """
    na = np.asarray(a.counts if isinstance(a, BiasHistogram) else a, dtype=np.float64)
    nb = np.asarray(b.counts if isinstance(b, BiasHistogram) else b, dtype=np.float64)
    if na.shape != nb.shape or na.ndim != 1:
        raise ValueError("histograms must share the same bins")
    pooled = na + nb
    if np.any(pooled <= 0):
        raise ValueError("every bin needs at least one count across the two histograms")
    stat = float(np.sum((na - nb) ** 2 / pooled))
    return stat, chi2_sf(stat, len(na) - 1)


# ---------------------------------------------------------------------------
# emission


def write_score_csv(score: ScoreMap, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for (i, j), v in np.ndenumerate(score.values):
            w.writerow([i, j, repr(float(v))])


def read_score_csv(path) -> ScoreMap:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    h = 1 + max(int(r["row"]) for r in rows)
    w = 1 + max(int(r["col"]) for r in rows)
    values = np.full((h, w), np.nan)
    for r in rows:
        values[int(r["row"]), int(r["col"])] = float(r["value"])
    return ScoreMap(values)


def write_summary(score: ScoreMap, path) -> None:
    Path(path).write_text(json.dumps(score.summary(), indent=1))


def write_histogram_csv(hist: BiasHistogram, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin", "count", "proportion"])
        for label, c, p in zip(BIAS_LABELS, hist.counts, hist.proportions):
            w.writerow([label, int(c), repr(float(p))])


def read_histogram_csv(path) -> BiasHistogram:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if [r["bin"] for r in rows] != list(BIAS_LABELS):
        raise ValueError(f"{path}: expected bins {BIAS_LABELS}")
    return BiasHistogram(np.array([int(r["count"]) for r in rows], dtype=np.int64))


def write_heatmap(values: np.ndarray, path) -> dict:
    """Binary PGM (P5) heatmap, min-max scaled to 0..255; scale saved in a JSON sidecar."""
    v = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(v)
    lo = float(v[finite].min()) if finite.any() else 0.0
    hi = float(v[finite].max()) if finite.any() else 0.0
    span = hi - lo if hi > lo else 1.0
    img = np.where(finite, np.round((v - lo) / span * 255.0), 0).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    scale = {"min": lo, "max": hi, "levels": 255}
    Path(str(path) + ".json").write_text(json.dumps(scale))
    return scale
