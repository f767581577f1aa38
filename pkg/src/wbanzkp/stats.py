"""Repetition statistics: two-tailed Student-t critical values and the
confidence half-width beta = t(alpha, R-1) * S / sqrt(R)."""
from __future__ import annotations

import math
import statistics
from statistics import NormalDist

from scipy import stats as _sps


class DomainError(ValueError):
    pass


def student_t_quantile(p: float, df: float) -> float:
    """Critical value t with P(|T| > t) = p for ``df`` degrees of freedom."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if math.isnan(df) or df < 1:
        raise DomainError(f"df must be >= 1, got {df}")
    q = 1.0 - p / 2.0
    if math.isinf(df):
        return NormalDist().inv_cdf(q)
    return float(_sps.t.ppf(q, df))


def beta(samples, p: float = 0.05) -> float:
    """Confidence half-width over R repetitions (two-tailed, level 1-p)."""
    xs = [float(x) for x in samples]
    r = len(xs)
    if r < 2:
        raise DomainError("need at least two repetitions")
    s = statistics.stdev(xs)
    return student_t_quantile(p, r - 1) * s / math.sqrt(r)


def mean_beta(samples, p: float = 0.05) -> tuple[float, float]:
    xs = [float(x) for x in samples]
    return statistics.fmean(xs), beta(xs, p)


def intervals_disjoint(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True when mean±beta intervals do not overlap."""
    (ma, ba), (mb, bb) = a, b
    return ma + ba < mb - bb or mb + bb < ma - ba
