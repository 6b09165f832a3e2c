"""Empirical Fisher information and its online average.

The empirical Fisher of a minibatch is the unbiased sample covariance of
the per-datum scores.  A chain keeps a running average of these
estimates, either as a full symmetric matrix or as its diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

FULL = "full"
DIAGONAL = "diagonal"
FORMS = (FULL, DIAGONAL)


def _centered(scores):
    g = np.asarray(scores, dtype=float)
    if g.ndim != 2:
        raise ValueError(f"scores must be an (n, D) array, got shape {g.shape}")
    if g.shape[0] < 2:
        raise ValueError("empirical Fisher needs at least two scores (divisor n - 1)")
    return g - g.mean(axis=0)


def empirical_fisher(scores):
    """Two-pass sample covariance of an (n, D) block of scores."""
    dev = _centered(scores)
    V = dev.T @ dev / (dev.shape[0] - 1)
    return 0.5 * (V + V.T)


def diagonal_empirical_fisher(scores):
    dev = _centered(scores)
    return (dev**2).sum(axis=0) / (dev.shape[0] - 1)


def inverse_t(t):
    """Default averaging weight; with it the estimate is the plain running mean."""
    return 1.0 / t


@dataclass(frozen=True)
class FisherEstimate:
    """Online-averaged empirical Fisher of one chain.

    ``t`` counts the updates applied; ``t == 0`` is the initial value.
    """

    form: str
    value: np.ndarray
    t: int = 0

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"form must be one of {FORMS}, got {self.form!r}")
        if self.t < 0:
            raise ValueError("update counter must be non-negative")

    @classmethod
    def initial(cls, dim, form=FULL):
        value = np.eye(dim) if form == FULL else np.ones(dim)
        return cls(form, value, 0)

    @property
    def dim(self):
        return self.value.shape[0]

    def matrix(self):
        return self.value if self.form == FULL else np.diag(self.value)

    def diagonal(self):
        return np.diag(self.value).copy() if self.form == FULL else self.value

    def to_json(self):
        return {"form": self.form, "values": np.ravel(self.value).tolist(), "t": self.t,
                "dim": self.dim}

    @classmethod
    def from_json(cls, d):
        value = np.asarray(d["values"], dtype=float)
        if d["form"] == FULL:
            value = value.reshape(d["dim"], d["dim"])
        return cls(d["form"], value, int(d["t"]))


def estimate_from_scores(scores, form):
    return empirical_fisher(scores) if form == FULL else diagonal_empirical_fisher(scores)


def online_update(est: FisherEstimate, V, kappa=inverse_t) -> FisherEstimate:
    """One step of the running average: (1 - k) * old + k * V with k = kappa(t + 1)."""
    V = np.asarray(V, dtype=float)
    if V.shape != est.value.shape:
        raise ValueError(
            f"{est.form} estimate has shape {est.value.shape}, update has {V.shape}"
        )
    t = est.t + 1
    k = kappa(t)
    value = (1.0 - k) * est.value + k * V
    if est.form == FULL:
        value = 0.5 * (value + value.T)
    return FisherEstimate(est.form, value, t)


def regularized(est: FisherEstimate, jitter: float) -> FisherEstimate:
    """Add ``jitter`` to the diagonal (full) or floor the entries at it (diagonal)."""
    if jitter < 0:
        raise ValueError("jitter must be non-negative")
    if jitter == 0:
        return est
    if est.form == FULL:
        value = est.value + jitter * np.eye(est.dim)
    else:
        value = np.maximum(est.value, jitter)
    return replace(est, value=value)


def default_jitter(est: FisherEstimate, relative=1e-8, floor=1e-12):
    """Jitter proportional to the mean diagonal; ``floor`` if the estimate is zero."""
    scale = float(np.mean(est.diagonal()))
    return relative * scale if scale > 0 else floor
