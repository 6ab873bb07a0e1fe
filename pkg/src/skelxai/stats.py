"""Welch's unequal-variance t-test with a hand-rolled Student-t tail.

The two-sided p-value is ``I_x(dof/2, 1/2)`` with ``x = dof / (dof + t^2)``,
where ``I`` is the regularized incomplete beta function evaluated by the
modified Lentz continued fraction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamples, NumericError

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    dof: float
    n1: int
    n2: int
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "t_statistic": self.t_statistic, "p_value": self.p_value, "dof": self.dof,
            "n1": self.n1, "n2": self.n2, "degenerate": self.degenerate,
        }


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise NumericError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return float(x)
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    # the fraction converges fast on the side of the mean; use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, dof: float) -> float:
    """P(|T| >= |t|) for Student's t with ``dof`` degrees of freedom."""
    if not dof > 0:
        raise ValueError("dof must be positive")
    if math.isinf(t):
        return 0.0
    return min(1.0, max(0.0, betainc(dof / 2.0, 0.5, dof / (dof + t * t))))


def unpaired_ttest(sample_a, sample_b) -> TTestResult:
    """Welch's two-sample t-test, two-sided.

    When both samples have zero variance the statistic is undefined; the
    result then reports t = 0, p = 1 and ``degenerate=True``.
    """
    a = np.asarray(list(sample_a), dtype=float)
    b = np.asarray(list(sample_b), dtype=float)
    n1, n2 = a.size, b.size
    if n1 < 2 or n2 < 2:
        raise InsufficientSamples(f"each sample needs >= 2 values, got {n1} and {n2}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericError("samples contain non-finite values")
    se1 = a.var(ddof=1) / n1
    se2 = b.var(ddof=1) / n2
    se = se1 + se2
    if se == 0.0:
        return TTestResult(0.0, 1.0, float(n1 + n2 - 2), n1, n2, degenerate=True)
    t = float((a.mean() - b.mean()) / math.sqrt(se))
    w1, w2 = se1 / se, se2 / se  # shares, so tiny variances cannot underflow when squared
    dof = float(1.0 / (w1 * w1 / (n1 - 1) + w2 * w2 / (n2 - 1)))
    return TTestResult(t, t_two_sided_p(t, dof), dof, n1, n2)
