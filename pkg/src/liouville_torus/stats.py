"""Small statistics helpers: estimates with error bars and two-sample tests."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    replicas: int

    def z_score(self, oracle: float) -> float:
        if self.std_error == 0:
            return 0.0 if self.value == oracle else math.copysign(math.inf, self.value - oracle)
        return (self.value - oracle) / self.std_error

    def as_dict(self):
        return asdict(self)


def mean_estimate(samples) -> Estimate:
    """Sample mean and its standard error along axis 0."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    return Estimate(float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(n)), n)


def mean_and_se(samples, axis=0):
    """Vectorized version of :func:`mean_estimate` returning arrays."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[axis]
    return np.mean(x, axis=axis), np.std(x, axis=axis, ddof=1) / math.sqrt(n)


def joint_z(a: Estimate, b: Estimate) -> float:
    """z statistic of the difference of two independent estimates."""
    se = math.hypot(a.std_error, b.std_error)
    if se == 0:
        return 0.0 if a.value == b.value else math.inf
    return (a.value - b.value) / se


def two_sample_z(series_a, series_b, min_length: int = 100) -> float:
    """Welch z statistic for the difference of means."""
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if len(a) < min_length or len(b) < min_length:
        raise ValueError(f"both series need at least {min_length} samples")
    diff = a.mean() - b.mean()
    se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    if diff == 0:
        return 0.0
    return diff / se if se > 0 else math.copysign(math.inf, diff)


def ratio_jackknife(weights, values):
    """Self-normalized mean ``sum w f / sum w`` with its delete-one jackknife error."""
    w = np.asarray(weights, dtype=float)
    f = np.asarray(values, dtype=float)
    n = len(w)
    sw = np.sum(w)
    swf = np.sum(w * f)
    if not sw > 0:
        raise FloatingPointError("all importance weights vanish")
    est = swf / sw
    loo = (swf - w * f) / (sw - w)
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return float(est), float(se)


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(np.sum(w) ** 2 / np.sum(w**2))
