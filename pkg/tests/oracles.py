"""Slow, independent reference implementations used only by the tests."""

import datetime as dt

import numpy as np


def crps_by_quadrature(atoms, cum, y, n=400_001):
    """Integrate (F(u) - 1{y <= u})^2 on a fine uniform grid (trapezoid rule).

    The integrand vanishes outside [min(atoms, y), max(atoms, y)], so the grid spans only that range.
    """
    atoms = np.asarray(atoms, dtype=np.float64)
    lo = min(atoms[0], y)
    hi = max(atoms[-1], y)
    if hi == lo:
        return 0.0
    u, h = np.linspace(lo, hi, n, retstep=True)
    levels = np.concatenate([[0.0], np.asarray(cum, dtype=np.float64)])
    F = levels[np.searchsorted(atoms, u, side="right")]
    g = (F - (u >= y)) ** 2
    return float(h * (g.sum() - 0.5 * (g[0] + g[-1])))


def antitonic_prefix_minmax(z, w):
    """Weighted antitonic regression by the min-max formula, O(n^2) block means from prefix sums."""
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = len(z)
    sw = np.concatenate([[0.0], np.cumsum(w)])
    swz = np.concatenate([[0.0], np.cumsum(w * z)])
    avg = np.full((n, n), np.nan)
    for k in range(n):
        for j in range(k, n):
            avg[k, j] = (swz[j + 1] - swz[k]) / (sw[j + 1] - sw[k])
    out = np.empty(n)
    for i in range(n):
        out[i] = min(max(avg[k, j] for j in range(i, n)) for k in range(i + 1))
    return out


def conv2d_loops(x, kernel, bias):
    """Direct nested-loop same-padded cross-correlation, (N, C, H, W) layout."""
    n, c, h, w = x.shape
    o, _, k, _ = kernel.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    out = np.zeros((n, o, h, w))
    for b in range(n):
        for oc in range(o):
            for i in range(h):
                for j in range(w):
                    out[b, oc, i, j] = bias[oc] + np.sum(xp[b, :, i : i + k, j : j + k] * kernel[oc])
    return out


def maxpool_loops(x):
    n, c, h, w = x.shape
    out = np.empty((n, c, h // 2, w // 2))
    for b in range(n):
        for ch in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    out[b, ch, i, j] = x[b, ch, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max()
    return out


def tconv_loops(x, kernel, bias):
    """2x2 stride-2 transposed convolution by scattering each input pixel."""
    n, c, h, w = x.shape
    o = kernel.shape[1]
    out = np.zeros((n, o, 2 * h, 2 * w))
    for b in range(n):
        for i in range(h):
            for j in range(w):
                for ci in range(c):
                    out[b, :, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2] += x[b, ci, i, j] * kernel[ci]
    return out + bias[None, :, None, None]


def climatology_window_scan(dates, rain, date, pixel):
    """Brute-force window members: earlier calendar years, calendar-day distance <= 2 (mod 365)."""

    def doy(d):
        n = d.timetuple().tm_yday
        leap = d.year % 4 == 0 and (d.year % 100 != 0 or d.year % 400 == 0)
        return n - 1 if leap and n >= 60 else n

    target = doy(date)
    vals = []
    for t, d in enumerate(dates):
        if d.year >= date.year:
            continue
        gap = abs(doy(d) - target)
        if min(gap, 365 - gap) <= 2:
            vals.append(float(rain[t][pixel]))
    return vals


def gibbs_exact_marginals(losses, r, sigma2):
    """Exact marginals of p(mask) ~ exp(-r * |mask| - L(mask) / (2 sigma2)) by enumeration."""
    K = len(next(iter(losses)))
    states = list(losses)
    logp = np.array([-r * sum(s) - losses[s] / (2 * sigma2) for s in states])
    p = np.exp(logp - logp.max())
    p /= p.sum()
    return np.array([sum(pi for pi, s in zip(p, states) if s[k]) for k in range(K)])


def dates_daily(start, n, step=1):
    return [start + dt.timedelta(days=step * i) for i in range(n)]
