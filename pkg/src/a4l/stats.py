"""Numeric kernels for the analytics jobs.

Everything here is self-contained: ordinary least squares by the closed-form
normal equations, Welch's two-sample t-test, and point-biserial correlation.
Student-t tail probabilities go through the regularized incomplete beta
function evaluated with Lentz's continued fraction, so no statistics
library is required at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class InsufficientData(ValueError):
    """Fewer points than the estimator needs."""


class DegenerateSample(ValueError):
    """Sample admits no variance or a single class; statistic undefined."""


def mean(xs: Sequence[float]) -> float:
    if not xs:
        raise InsufficientData("mean of empty sample")
    return math.fsum(xs) / len(xs)


def sample_variance(xs: Sequence[float]) -> float:
    """Unbiased (n-1) variance."""
    n = len(xs)
    if n < 2:
        raise InsufficientData("variance needs n >= 2")
    m = mean(xs)
    return math.fsum((x - m) ** 2 for x in xs) / (n - 1)


# --- regularized incomplete beta -------------------------------------------

_MAX_ITER = 300
_FPMIN = 1e-300
_EPS = 3e-15


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz's method)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student's t."""
    if df <= 0.0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


# --- estimators -------------------------------------------------------------

@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float
    mean_a: float
    mean_b: float
    n_a: int
    n_b: int


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    """Welch's unequal-variance two-sample t-test, two-sided p-value.

    Raises DegenerateSample when both groups have zero variance (the
    statistic is undefined) and InsufficientData for groups below n=2.
    """
    if len(a) < 2 or len(b) < 2:
        raise InsufficientData("Welch test needs n >= 2 per group")
    ma, mb = mean(a), mean(b)
    va, vb = sample_variance(a), sample_variance(b)
    sa, sb = va / len(a), vb / len(b)
    denom = sa + sb
    if denom == 0.0:
        raise DegenerateSample("zero variance in both groups")
    t = (ma - mb) / math.sqrt(denom)
    df = denom * denom / (
        sa * sa / (len(a) - 1) + sb * sb / (len(b) - 1)
    )
    return WelchResult(t=t, df=df, p=student_t_sf2(t, df),
                       mean_a=ma, mean_b=mb, n_a=len(a), n_b=len(b))


@dataclass(frozen=True)
class OlsFit:
    slope: float
    intercept: float
    n: int


def ols_fit(xs: Sequence[float], ys: Sequence[float]) -> OlsFit:
    """Least-squares line ys ~ slope * xs + intercept (closed form)."""
    n = len(xs)
    if n != len(ys):
        raise ValueError("xs and ys differ in length")
    if n < 2:
        raise InsufficientData("OLS needs n >= 2")
    mx, my = mean(xs), mean(ys)
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    if sxx == 0.0:
        raise DegenerateSample("zero variance on the time axis")
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    return OlsFit(slope=slope, intercept=my - slope * mx, n=n)


def point_biserial(scores: Sequence[float], flags: Sequence[int]) -> float:
    """Pearson correlation between a continuous score and a 0/1 indicator."""
    n = len(scores)
    if n != len(flags):
        raise ValueError("scores and flags differ in length")
    if n < 2:
        raise InsufficientData("correlation needs n >= 2")
    if len(set(flags)) < 2:
        raise DegenerateSample("adoption indicator has a single class")
    ms, mf = mean(scores), mean([float(f) for f in flags])
    num = math.fsum((s - ms) * (f - mf) for s, f in zip(scores, flags))
    ds = math.fsum((s - ms) ** 2 for s in scores)
    dfl = math.fsum((f - mf) ** 2 for f in flags)
    if ds == 0.0:
        raise DegenerateSample("zero variance in scores")
    return num / math.sqrt(ds * dfl)
