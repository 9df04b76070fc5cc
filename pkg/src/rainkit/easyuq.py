"""Isotonic distributional regression (EasyUQ) and exact CRPS for discrete CDFs.

For each pixel the fit maps a scalar point forecast to a predictive CDF.
At every distinct training observation ``u`` the fitted values
``F_x(u)`` are the antitonic (non-increasing in the forecast) weighted
least-squares fit of the indicators ``1{y <= u}``.  This minimizes the
mean in-sample CRPS over all stochastically ordered CDF families.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import gtf

CDF_TOL = 1e-12
IDR_MAGIC = b"GIDR"


class InvalidCDF(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteCDF:
    atoms: np.ndarray
    cum: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        cum = np.asarray(self.cum, dtype=np.float64)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "cum", cum)
        if atoms.ndim != 1 or atoms.shape != cum.shape or atoms.size == 0:
            raise InvalidCDF("atoms and cum must be equal-length non-empty vectors")
        if not np.all(np.isfinite(atoms)) or not np.all(np.isfinite(cum)):
            raise InvalidCDF("non-finite atoms or probabilities")
        if np.any(np.diff(atoms) <= 0):
            raise InvalidCDF("atoms must be strictly increasing")
        if np.any(np.diff(cum) < 0) or cum[0] <= 0:
            raise InvalidCDF("cumulative probabilities must be positive and non-decreasing")
        if abs(cum[-1] - 1.0) > CDF_TOL:
            raise InvalidCDF(f"final cumulative probability is {cum[-1]!r}, not 1")

    @classmethod
    def point_mass(cls, value: float) -> "DiscreteCDF":
        return cls(np.array([value], dtype=np.float64), np.array([1.0]))

    @classmethod
    def from_samples(cls, samples, weights=None) -> "DiscreteCDF":
        """Empirical CDF of (optionally weighted) samples; tied values are merged."""
        samples = np.asarray(samples, dtype=np.float64).ravel()
        w = np.ones_like(samples) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
        atoms, inverse = np.unique(samples, return_inverse=True)
        mass = np.bincount(inverse, weights=w)
        cum = np.cumsum(mass) / mass.sum()
        cum[-1] = 1.0
        return cls(atoms, cum)

    @classmethod
    def from_step_values(cls, thresholds, values) -> "DiscreteCDF":
        """CDF that takes ``values[k]`` on ``[thresholds[k], thresholds[k+1])``; zero-mass atoms dropped."""
        thresholds = np.asarray(thresholds, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        jumps = np.diff(values, prepend=0.0)
        keep = jumps > 0
        cum = values[keep].copy()
        cum[-1] = 1.0
        return cls(thresholds[keep], cum)

    @property
    def probs(self) -> np.ndarray:
        return np.diff(self.cum, prepend=0.0)

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        idx = np.searchsorted(self.atoms, u, side="right")
        return np.where(idx > 0, self.cum[np.maximum(idx - 1, 0)], 0.0)

    def mean(self) -> float:
        return float(np.dot(self.atoms, self.probs))


# ---------------------------------------------------------------------------
# CRPS


def crps_step(thresholds: np.ndarray, values: np.ndarray, y) -> np.ndarray:
    """CRPS of step CDFs sharing jump locations ``thresholds`` (m,).

    ``values`` is (..., m): the CDF level on ``[thresholds[k], thresholds[k+1])``,
    with the last level 1.  ``y`` broadcasts against ``values[..., 0]``.
    Integrates ``(F(u) - 1{y <= u})**2`` exactly piece by piece.
    """
    u = np.asarray(thresholds, dtype=np.float64)
    F = np.asarray(values, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)[..., None]
    lo = u
    hi = np.append(u[1:], np.inf)
    below = np.clip(np.minimum(hi, y) - lo, 0.0, None)  # part of the piece left of y
    above = np.clip(hi - np.maximum(lo, y), 0.0, None)  # part right of y
    above = np.where(np.isinf(above), 0.0, above)
    inner = F * F * below + np.where(above > 0, (1.0 - F) ** 2 * above, 0.0)
    left_tail = np.clip(u[0] - y[..., 0], 0.0, None)  # F = 0 below the first atom
    return inner.sum(axis=-1) + left_tail


def crps_discrete(cdf: DiscreteCDF, y: float) -> float:
    if not isinstance(cdf, DiscreteCDF):
        raise InvalidCDF("expected a DiscreteCDF")
    if not np.isfinite(y):
        raise ValueError("observation must be finite")
    return float(crps_step(cdf.atoms, cdf.cum, y))


def crps_ensemble(members: np.ndarray, y: np.ndarray) -> np.ndarray:
    """CRPS of equally weighted ensembles; members along axis 0.

    Uses mean|X - y| - 0.5 mean|X - X'| with the sorted-sum form of the
    second term.
    """
    x = np.sort(np.asarray(members, dtype=np.float64), axis=0)
    y = np.asarray(y, dtype=np.float64)
    m = x.shape[0]
    first = np.abs(x - y[None]).mean(axis=0)
    coef = (2.0 * np.arange(1, m + 1) - m - 1).reshape((m,) + (1,) * (x.ndim - 1))
    spread = 2.0 * (coef * x).sum(axis=0) / (m * m)
    return first - 0.5 * spread


# ---------------------------------------------------------------------------
# pool-adjacent-violators


def antitonic_columns(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted antitonic least-squares fit of every column of ``z`` (n, m).

    Pool-adjacent-violators run on all columns at once: each column keeps
    its own block stack, and a merge step pools the top two blocks of every
    column whose block means increase.
    """
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, m = z.shape
    means = np.empty((m, n))
    weights = np.empty((m, n))
    starts = np.empty((m, n), dtype=np.int64)
    top = np.zeros(m, dtype=np.int64)  # number of blocks per column
    cols = np.arange(m)
    for i in range(n):
        means[cols, top] = z[i]
        weights[cols, top] = w[i]
        starts[cols, top] = i
        top += 1
        while True:
            viol = top > 1
            if not viol.any():
                break
            c = cols[viol]
            t = top[viol]
            bad = means[c, t - 2] < means[c, t - 1]
            if not bad.any():
                break
            c, t = c[bad], t[bad]
            wa, wb = weights[c, t - 2], weights[c, t - 1]
            means[c, t - 2] = (wa * means[c, t - 2] + wb * means[c, t - 1]) / (wa + wb)
            weights[c, t - 2] = wa + wb
            top[c] -= 1
    out = np.empty((n, m))
    for j in range(m):
        b = top[j]
        bounds = np.append(starts[j, :b], n)
        out[:, j] = np.repeat(means[j, :b], np.diff(bounds))
    return out


def antitonic_minmax(z: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Brute-force min-max formula for the weighted antitonic regression of one vector.

    ``g_i = min_{k <= i} max_{j >= i} mean(z[k..j])``; an O(n^3) oracle.
    """
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = len(z)
    out = np.empty(n)
    for i in range(n):
        best = np.inf
        for k in range(i + 1):
            worst = -np.inf
            for j in range(i, n):
                avg = np.dot(w[k : j + 1], z[k : j + 1]) / w[k : j + 1].sum()
                worst = max(worst, avg)
            best = min(best, worst)
        out[i] = best
    return out


# ---------------------------------------------------------------------------
# IDR fit and prediction


@dataclass
class IDRFit:
    predictors: np.ndarray  # (n,) sorted unique training forecasts
    thresholds: np.ndarray  # (m,) sorted unique training observations
    cdf: np.ndarray  # (n, m) fitted CDF levels
    weights: np.ndarray  # (n,) number of training pairs per predictor

    def row(self, k: int) -> DiscreteCDF:
        return DiscreteCDF.from_step_values(self.thresholds, self.cdf[k])

    def levels(self, x) -> np.ndarray:
        """CDF levels at the thresholds for forecasts ``x``; linear in x between fitted rows, clamped outside."""
        x = np.asarray(x, dtype=np.float64)
        p = self.predictors
        if len(p) == 1:
            return np.broadcast_to(self.cdf[0], x.shape + self.cdf[0].shape).copy()
        xc = np.clip(x, p[0], p[-1])
        k = np.clip(np.searchsorted(p, xc, side="right") - 1, 0, len(p) - 2)
        lam = ((xc - p[k]) / (p[k + 1] - p[k]))[..., None]
        return (1.0 - lam) * self.cdf[k] + lam * self.cdf[k + 1]

    def in_sample_crps(self, x, y) -> float:
        """Mean CRPS of the fitted CDFs over training pairs."""
        return float(np.mean(crps_step(self.thresholds, self.levels(x), y)))


def idr_fit(forecasts, observations) -> IDRFit:
    x = np.asarray(forecasts, dtype=np.float64).ravel()
    y = np.asarray(observations, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("idr_fit needs at least one (forecast, observation) pair")
    if x.shape != y.shape:
        raise ValueError("forecasts and observations differ in length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite forecast or observation")
    predictors, inv = np.unique(x, return_inverse=True)
    thresholds = np.unique(y)
    counts = np.bincount(inv).astype(np.float64)
    indicators = (y[:, None] <= thresholds[None, :]).astype(np.float64)
    z = np.zeros((len(predictors), len(thresholds)))
    np.add.at(z, inv, indicators)
    z /= counts[:, None]
    cdf = antitonic_columns(z, counts)
    cdf[:, -1] = 1.0
    return IDRFit(predictors, thresholds, np.clip(cdf, 0.0, 1.0), counts)


def idr_predict(fit: IDRFit, x_new: float) -> DiscreteCDF:
    return DiscreteCDF.from_step_values(fit.thresholds, fit.levels(float(x_new)))


def idr_fit_grid(forecasts: np.ndarray, observations: np.ndarray) -> list[list[IDRFit]]:
    """Independent per-pixel fits for (T, H, W) forecast and observation stacks."""
    forecasts = np.asarray(forecasts)
    observations = np.asarray(observations)
    if forecasts.shape != observations.shape or forecasts.ndim != 3:
        raise ValueError("expected matching (T, H, W) arrays")
    _, h, w = forecasts.shape
    return [[idr_fit(forecasts[:, i, j], observations[:, i, j]) for j in range(w)] for i in range(h)]


def idr_crps_grid(fits: Sequence[Sequence[IDRFit]], forecasts: np.ndarray, truths: np.ndarray) -> np.ndarray:
    """CRPS of per-pixel IDR predictions for (T, H, W) forecasts, returned as (T, H, W)."""
    t, h, w = forecasts.shape
    out = np.empty((t, h, w))
    for i in range(h):
        for j in range(w):
            fit = fits[i][j]
            out[:, i, j] = crps_step(fit.thresholds, fit.levels(forecasts[:, i, j]), truths[:, i, j])
    return out


# ---------------------------------------------------------------------------
# serialization: magic, u32 header length, JSON header, GTF1 blocks per pixel


def save_idr_grid(fits: Sequence[Sequence[IDRFit]], path) -> None:
    h, w = len(fits), len(fits[0])
    blocks = [{"pixel": [i, j], "n": len(f.predictors), "m": len(f.thresholds)} for i, row in enumerate(fits) for j, f in enumerate(row)]
    raw = json.dumps({"height": h, "width": w, "blocks": blocks}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(IDR_MAGIC + struct.pack("<I", len(raw)) + raw)
        for row in fits:
            for f in row:
                fh.write(gtf.encode(f.predictors[None]))
                fh.write(gtf.encode(f.weights[None]))
                fh.write(gtf.encode(f.thresholds[None]))
                fh.write(gtf.encode(f.cdf))


def load_idr_grid(path) -> list[list[IDRFit]]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != IDR_MAGIC:
        raise gtf.FormatError("not an IDR fit file", 0)
    (n,) = struct.unpack("<I", data[4:8])
    header = json.loads(data[8 : 8 + n].decode("utf-8"))
    stream = io.BytesIO(data)
    stream.seek(8 + n)
    fits: list[list[IDRFit]] = [[None] * header["width"] for _ in range(header["height"])]  # type: ignore[list-item]
    for block in header["blocks"]:
        parts = [gtf.read_from(stream, stream.tell()).astype(np.float64) for _ in range(4)]
        i, j = block["pixel"]
        cdf = parts[3].reshape(block["n"], block["m"])
        cdf[:, -1] = 1.0
        fits[i][j] = IDRFit(parts[0].ravel(), parts[2].ravel(), cdf, parts[1].ravel())
    return fits
