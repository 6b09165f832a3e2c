"""Sampling-accuracy and mixing diagnostics.

Moments use the population normalization (divisor t).  Autocorrelation
times are truncated with the initial-positive-sequence rule and averaged
over coordinates when a multivariate trace is given.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ZeroVarianceError(ValueError):
    pass


class UndefinedReferenceError(ValueError):
    pass


@dataclass(frozen=True)
class MomentSummary:
    mean: np.ndarray
    covariance: np.ndarray
    count: int

    @classmethod
    def of(cls, samples):
        x = np.asarray(samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if len(x) < 2:
            raise ValueError("moments need at least two samples")
        mean = x.mean(axis=0)
        dev = x - mean
        cov = dev.T @ dev / len(x)
        return cls(mean, 0.5 * (cov + cov.T), len(x))

    @classmethod
    def exact(cls, mean, covariance):
        """Summary of a reference distribution known in closed form."""
        return cls(np.asarray(mean, dtype=float), np.asarray(covariance, dtype=float), 0)

    def merge(self, other: "MomentSummary") -> "MomentSummary":
        """Summary of the concatenation of the two underlying sample sets."""
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        cov = (self.count * self.covariance + other.count * other.covariance
               + np.outer(delta, delta) * (self.count * other.count / n)) / n
        return MomentSummary(mean, cov, n)


def running_moments(samples, upto=None) -> MomentSummary:
    """Mean and covariance of the first ``upto`` samples (all if None)."""
    samples = np.asarray(getattr(samples, "samples", samples), dtype=float)
    upto = len(samples) if upto is None else upto
    if upto < 2:
        raise ValueError("running moments need upto >= 2")
    return MomentSummary.of(samples[:upto])


def relative_errors(est: MomentSummary, ref: MomentSummary):
    """Relative L1 errors (E1, E2) of the mean and covariance against ``ref``."""
    if est.mean.shape != ref.mean.shape or est.covariance.shape != ref.covariance.shape:
        raise ValueError("estimate and reference dimensions differ")
    d1 = np.abs(ref.mean).sum()
    d2 = np.abs(ref.covariance).sum()
    if d1 == 0 or d2 == 0:
        raise UndefinedReferenceError("reference mean or covariance is identically zero")
    e1 = np.abs(est.mean - ref.mean).sum() / d1
    e2 = np.abs(est.covariance - ref.covariance).sum() / d2
    return float(e1), float(e2)


def error_curve(samples, ref: MomentSummary, checkpoints):
    """(count, E1, E2) rows at each prefix length in ``checkpoints``."""
    samples = np.asarray(samples, dtype=float)
    rows = []
    for k in checkpoints:
        if 2 <= k <= len(samples):
            rows.append((int(k), *relative_errors(running_moments(samples, k), ref)))
    return rows


def _centered_series(series):
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1-D series")
    dev = x - x.mean()
    var = (dev @ dev) / len(x)
    if not var > 0:
        raise ZeroVarianceError("series has zero variance")
    return dev, var


def autocorrelation(series, s):
    """Lag-``s`` autocorrelation with the 1/(T - s) lag normalization."""
    dev, var = _centered_series(series)
    T = len(dev)
    if not 0 <= s < T:
        raise ValueError(f"lag must satisfy 0 <= s < {T}")
    return float(dev[: T - s] @ dev[s:] / ((T - s) * var))


def autocorrelation_function(series):
    """All lags 0..T-1 via FFT, same normalization as ``autocorrelation``."""
    dev, var = _centered_series(series)
    T = len(dev)
    nfft = 1 << (2 * T - 1).bit_length()
    f = np.fft.rfft(dev, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:T]
    return acov / (np.arange(T, 0, -1) * var)


def autocorrelation_time(series, floor=1e-3):
    """1 + 2 sum_{s=1}^{S} rho(s), stopping before the first s with rho(s) + rho(s+1) <= 0."""
    rho = autocorrelation_function(series)
    pair = rho[1:-1] + rho[2:]
    stop = np.flatnonzero(pair <= 0)
    S = stop[0] if stop.size else len(pair)
    return max(1.0 + 2.0 * rho[1:S + 1].sum(), floor)


def mean_autocorrelation_time(samples):
    """Per-coordinate autocorrelation time averaged over coordinates."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        return autocorrelation_time(x)
    return float(np.mean([autocorrelation_time(x[:, j]) for j in range(x.shape[1])]))


def atuc(series, time_per_sample):
    """Autocorrelation time times seconds per sample; coordinates averaged."""
    if not time_per_sample > 0:
        raise ValueError("time per sample must be positive")
    return mean_autocorrelation_time(series) * time_per_sample
