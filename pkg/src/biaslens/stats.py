"""Welch's t-test on top of a self-contained incomplete-beta evaluation.

The two-sided p-value of a t statistic with df degrees of freedom is
I_x(df/2, 1/2) with x = df / (df + t^2), where I is the regularized
incomplete beta function. I is evaluated with the standard continued
fraction (Lentz's method), which converges for all 0 < x < 1 when applied
to whichever of I_x(a,b) and 1 - I_{1-x}(b,a) has x below the split point
(a+1)/(a+b+2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BiasLensError


class DegenerateGroup(BiasLensError):
    """A t-test group is too small or both groups have zero variance."""


_MAX_ITER = 300
_EPS = 3e-16
_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the incomplete beta function, modified
    # Lentz's algorithm. Coefficients follow the classical even/odd
    # recurrence: d_{2m} = m(b-m)x / ((a+2m-1)(a+2m)),
    # d_{2m+1} = -(a+m)(a+b+m)x / ((a+2m)(a+2m+1)).
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
    raise ArithmeticError(f"incomplete beta did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        a * math.log(x)
        + b * math.log1p(-x)
        - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


@dataclass(frozen=True, slots=True)
class TTestResult:
    t: float
    df: float
    p: float


def welch_ttest(a, b) -> TTestResult:
    """Two-sided Welch t-test (unequal variances) on two samples.

    Returns the t statistic, Welch-Satterthwaite degrees of freedom, and
    two-sided p-value. Raises DegenerateGroup if either sample has fewer
    than 2 values or both samples have zero variance.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise DegenerateGroup(f"group sizes {na} and {nb}; need at least 2 each")
    va = float(a.var(ddof=1))
    vb = float(b.var(ddof=1))
    if va == 0.0 and vb == 0.0:
        raise DegenerateGroup("zero variance in both groups")
    sa, sb = va / na, vb / nb
    se2 = sa + sb
    t = (float(a.mean()) - float(b.mean())) / math.sqrt(se2)
    df = se2 * se2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    p = regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t)) if t != 0.0 else 1.0
    return TTestResult(t=t, df=df, p=p)
