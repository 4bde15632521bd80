"""Ensemble statistics: proportions with Wilson intervals, means with
batch-means standard errors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthError, ParameterError

Z95 = 1.959963984540054


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple:
    """95% Wilson score interval for a Bernoulli proportion k/n."""
    if n < 1:
        raise ParameterError("need at least one trial")
    if not 0 <= k <= n:
        raise ParameterError("successes out of range")
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class EnsembleStat:
    """Monte Carlo estimate: count, mean, stderr and a 95% interval."""

    n: int
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    label: str = ""

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("EnsembleStat needs n >= 1")
        if not (self.ci_low <= self.mean <= self.ci_high):
            raise ParameterError("interval must contain the point estimate")

    @staticmethod
    def from_bernoulli(k: int, n: int, label: str = "") -> "EnsembleStat":
        """Proportion estimate with Wilson 95% interval."""
        p = k / n
        lo, hi = wilson_interval(k, n)
        stderr = math.sqrt(p * (1 - p) / n)
        return EnsembleStat(n, p, stderr, lo, hi, label)

    @staticmethod
    def from_values(values, label: str = "") -> "EnsembleStat":
        """Mean of i.i.d. replicate values with a normal 95% interval."""
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or len(v) < 1:
            raise LengthError("need a nonempty 1-d value array")
        m = float(v.mean())
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        return EnsembleStat(len(v), m, se, m - Z95 * se, m + Z95 * se, label)

    @staticmethod
    def from_batch_means(series, batch_len: int, label: str = "") -> "EnsembleStat":
        """Mean of a correlated series with batch-means stderr.

        The series is truncated to whole batches; requires length >= 2*batch_len.
        """
        s = np.asarray(series, dtype=float)
        if batch_len < 1:
            raise ParameterError("batch_len must be >= 1")
        if s.ndim != 1 or len(s) < 2 * batch_len:
            raise LengthError("series must be at least two batches long")
        nb = len(s) // batch_len
        trimmed = s[: nb * batch_len].reshape(nb, batch_len)
        bm = trimmed.mean(axis=1)
        m = float(bm.mean())
        se = float(bm.std(ddof=1) / math.sqrt(nb))
        return EnsembleStat(nb, m, se, m - Z95 * se, m + Z95 * se, label)


def batch_means_stderr(series, batch_len: int) -> float:
    return EnsembleStat.from_batch_means(series, batch_len).stderr
