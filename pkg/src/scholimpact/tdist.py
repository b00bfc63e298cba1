"""Student's t distribution via the regularized incomplete beta function."""

from __future__ import annotations

import math
from statistics import NormalDist

_EPS = 1e-16
_TINY = 1e-300


def _beta_cf(a: float, b: float, x: float, max_iter: int = 100_000) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def _tails(t: float, df: float) -> tuple[float, float]:
    # (P(T > |t|), P(0 < T < |t|)); whichever is smaller is computed directly
    if df <= 0:
        raise ValueError("df must be positive")
    t2 = t * t
    if t2 < df:
        half_central = 0.5 * betainc(0.5, df / 2.0, t2 / (df + t2))
        return 0.5 - half_central, half_central
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t2))
    return tail, 0.5 - tail


def t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t)."""
    tail, half_central = _tails(t, df)
    return tail if t >= 0 else 0.5 + half_central


def t_cdf(t: float, df: float) -> float:
    tail, half_central = _tails(t, df)
    return tail if t < 0 else 0.5 + half_central


def t_pdf(t: float, df: float) -> float:
    log_norm = (math.lgamma((df + 1) / 2.0) - math.lgamma(df / 2.0)
                - 0.5 * math.log(df * math.pi))
    return math.exp(log_norm - (df + 1) / 2.0 * math.log1p(t * t / df))


def t_quantile(df: float, p: float) -> float:
    """Inverse CDF of Student's t with ``df`` degrees of freedom."""
    if not df >= 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly between 0 and 1, got {p}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -_upper_quantile(df, p)
    return _upper_quantile(df, 1.0 - p)


def _upper_quantile(df: float, upper: float) -> float:
    # positive x with P(T > x) = upper, for upper < 0.5
    if df == 1:
        return 1.0 / math.tan(math.pi * upper)
    if df == 2:
        return (1.0 - 2.0 * upper) / math.sqrt(2.0 * upper * (1.0 - upper))

    # Cornish-Fisher style start from the normal quantile, then safeguarded
    # Newton on the upper tail.
    z = -NormalDist().inv_cdf(upper)
    g1 = (z ** 3 + z) / 4.0
    g2 = (5 * z ** 5 + 16 * z ** 3 + 3 * z) / 96.0
    x = z + g1 / df + g2 / df ** 2
    lo, hi = 0.0, max(2.0 * x, 1.0)
    while t_sf(hi, df) > upper:
        lo, hi = hi, hi * 2.0
    if not lo < x < hi:
        x = 0.5 * (lo + hi)
    for _ in range(200):
        f = t_sf(x, df) - upper
        if f > 0:
            lo = x
        else:
            hi = x
        step = f / t_pdf(x, df)
        nxt = x + step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= 1e-14 * max(1.0, abs(nxt)):
            return nxt
        x = nxt
    return x
