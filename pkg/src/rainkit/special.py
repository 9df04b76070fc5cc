"""Regularized incomplete gamma functions and the chi-square survival function."""

from __future__ import annotations

import math

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def _series_log_p(a: float, x: float) -> float:
    """log P(a, x) from the power series; converges fast for x < a + 1."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return math.log(total) - x + a * math.log(x) - math.lgamma(a)


def _cf_log_q(a: float, x: float) -> float:
    """log Q(a, x) from the Lentz continued fraction; for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.log(h) - x + a * math.log(x) - math.lgamma(a)


def gammainc(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0 or x < 0:
        raise ValueError("need a > 0 and x >= 0")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return math.exp(_series_log_p(a, x))
    return 1.0 - math.exp(_cf_log_q(a, x))


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if a <= 0 or x < 0:
        raise ValueError("need a > 0 and x >= 0")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - math.exp(_series_log_p(a, x))
    return math.exp(_cf_log_q(a, x))


def log_gammaincc(a: float, x: float) -> float:
    """log Q(a, x), finite even where Q underflows."""
    if x < a + 1.0:
        return math.log1p(-math.exp(_series_log_p(a, x))) if x > 0 else 0.0
    return _cf_log_q(a, x)


def chi2_sf(stat: float, dof: int) -> float:
    """Upper-tail probability of a chi-square variable with ``dof`` degrees of freedom."""
    return gammaincc(dof / 2.0, stat / 2.0)
