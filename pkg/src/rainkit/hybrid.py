"""Blend of U-Net and NWP forecasts with one pooled weight."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BlendWeight:
    beta: float
    sum_sq: float  # sum of squared forecast differences
    n: int
    split: str = "unspecified"


def fit_beta(y, unet, nwp, split: str = "unspecified") -> BlendWeight:
    """No-intercept least squares of the U-Net residual ``y - unet`` on ``nwp - unet``.

    Pooled over every (pixel, date) pair.
    """
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(unet, dtype=np.float64)
    v = np.asarray(nwp, dtype=np.float64)
    if not (y.shape == u.shape == v.shape):
        raise ValueError("y, unet and nwp must be aligned")
    d = (v - u).ravel()
    r = (y - u).ravel()
    ss = float(d @ d)
    if ss == 0.0:
        raise ValueError("NWP and U-Net forecasts are identical; beta is undetermined")
    return BlendWeight(float(d @ r) / ss, ss, d.size, split)


def blend(unet, nwp, beta: float, floor: bool = True) -> np.ndarray:
    u = np.asarray(unet, dtype=np.float64)
    v = np.asarray(nwp, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    out = (1.0 - beta) * u + beta * v
    return np.maximum(out, 0.0) if floor else out


def blend_ensemble(unet, members, beta: float, floor: bool = True) -> np.ndarray:
    """Apply the blend to every NWP member; ``members`` is (M, ...) aligned with ``unet``."""
    m = np.asarray(members, dtype=np.float64)
    u = np.asarray(unet, dtype=np.float64)
    if m.shape[1:] != u.shape:
        raise ValueError(f"members {m.shape} not aligned with forecast {u.shape}")
    return blend(np.broadcast_to(u, m.shape), m, beta, floor=floor)
