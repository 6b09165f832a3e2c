"""Probabilistic models consumed by the samplers.

Every model exposes per-datum scores (gradients of the per-datum
log-likelihood), the gradient of a Gaussian log-prior and the full-data
log posterior.  Two concrete models come with independent posterior
oracles: Bayesian linear regression (conjugate, exact) and logistic
regression in at most two dimensions (dense grid quadrature).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.special import expit, log_expit


class DimensionError(ValueError):
    """Parameter and feature dimensions disagree."""


class FactorizationError(np.linalg.LinAlgError):
    """A matrix that must be positive definite is not."""


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """N feature rows with one response each.

    Arrays are copied and made read-only on construction.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = _readonly(self.X)
        y = _readonly(self.y)
        if X.ndim != 2:
            raise DimensionError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] < 1:
            raise ValueError("dataset needs at least one item")
        if y.shape != (X.shape[0],):
            raise DimensionError(f"expected {X.shape[0]} responses, got shape {y.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def with_features(self, X) -> "Dataset":
        return Dataset(X, self.y)


def load_csv(path, *, binary_labels=False) -> Dataset:
    """Read a dataset CSV: header row, feature columns, response last.

    With ``binary_labels`` a {-1, +1} response column is remapped to {0, 1}.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError(f"{path}: header with at least one feature and a response required")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float).reshape(-1, len(header))
    X, y = data[:, :-1], data[:, -1]
    if binary_labels:
        y = remap_labels(y)
    return Dataset(X, y)


def remap_labels(y):
    y = np.asarray(y, dtype=float)
    values = set(np.unique(y).tolist())
    if values <= {0.0, 1.0}:
        return y
    if values <= {-1.0, 1.0}:
        return (y + 1.0) / 2.0
    raise ValueError(f"binary labels must be {{0,1}} or {{-1,+1}}, got {sorted(values)}")


def save_csv(dataset: Dataset, path, metadata=None):
    """Write ``dataset`` as CSV; ``metadata`` goes to a ``.json`` sidecar."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(dataset.dim)] + ["y"])
        for xi, yi in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
    if metadata is not None:
        with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
            json.dump(metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = _readonly(self.mean)
        cov = _readonly(self.covariance)
        if cov.shape != (mean.size, mean.size):
            raise DimensionError("covariance shape does not match mean")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError("posterior covariance is not positive definite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_chol", chol)

    @property
    def precision(self):
        return np.linalg.inv(self.covariance)

    def logpdf(self, theta):
        """Normalized log-density; ``theta`` may be (D,) or (M, D)."""
        theta = np.atleast_2d(theta)
        z = linalg.solve_triangular(self._chol, (theta - self.mean).T, lower=True)
        logdet = 2.0 * np.log(np.diag(self._chol)).sum()
        out = -0.5 * (z**2).sum(axis=0) - 0.5 * (self.mean.size * np.log(2 * np.pi) + logdet)
        return out if out.size > 1 else out[0]

    def sample(self, rng, size=None):
        shape = () if size is None else (size,)
        z = rng.standard_normal(shape + (self.mean.size,))
        return self.mean + z @ self._chol.T


def _prior_matrix(prior_precision, dim):
    lam = np.asarray(prior_precision, dtype=float)
    if lam.ndim == 0:
        if lam <= 0:
            raise ValueError("prior precision must be positive")
        return float(lam) * np.eye(dim)
    if lam.shape != (dim, dim):
        raise DimensionError(f"prior precision must be scalar or ({dim}, {dim})")
    return lam


@dataclass(frozen=True)
class Model:
    """Base class: a dataset, a zero-mean Gaussian prior and a per-datum likelihood.

    Subclasses implement ``_residual`` and ``log_likelihood``; the score of a
    generalized linear model is ``residual * x``.
    """

    dataset: Dataset
    prior_precision: float | np.ndarray = 1.0
    _lam: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_lam", _prior_matrix(self.prior_precision, self.dim))

    @property
    def N(self) -> int:
        return self.dataset.N

    @property
    def dim(self) -> int:
        return self.dataset.dim

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise DimensionError(f"theta has shape {theta.shape}, model expects ({self.dim},)")
        return theta

    def _rows(self, idx):
        if idx is None:
            return self.dataset.X, self.dataset.y
        return self.dataset.X[idx], self.dataset.y[idx]

    def score(self, theta, x, y):
        """Gradient of log p(y | x, theta) for a single datum."""
        theta = self._check(theta)
        x = np.asarray(x, dtype=float)
        if x.shape != theta.shape:
            raise DimensionError(f"datum has shape {x.shape}, theta has {theta.shape}")
        return self._residual(theta, x[None, :], np.atleast_1d(y))[0] * x

    def scores(self, theta, idx=None):
        """(n, D) matrix of per-datum scores for rows ``idx`` (all rows if None)."""
        theta = self._check(theta)
        X, y = self._rows(idx)
        return self._residual(theta, X, y)[:, None] * X

    def minibatch_mean_score(self, theta, idx):
        idx = np.asarray(idx)
        if idx.size == 0:
            raise ValueError("minibatch must not be empty")
        return self.scores(theta, idx).mean(axis=0)

    def grad_log_prior(self, theta):
        return -self._lam @ self._check(theta)

    def log_prior(self, theta):
        theta = self._check(theta)
        return -0.5 * theta @ self._lam @ theta

    def log_unnormalized_posterior(self, theta):
        return self.log_prior(theta) + self.log_likelihood(theta).sum()

    def grad_log_posterior(self, theta):
        theta = self._check(theta)
        X, y = self._rows(None)
        return self.grad_log_prior(theta) + X.T @ self._residual(theta, X, y)

    def log_likelihood(self, theta, idx=None):
        raise NotImplementedError

    def _residual(self, theta, X, y):
        raise NotImplementedError


@dataclass(frozen=True)
class LinearRegressionModel(Model):
    """y ~ N(theta^T x, noise_variance) with known noise variance."""

    noise_variance: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not self.noise_variance > 0:
            raise ValueError("noise variance must be positive")

    def _residual(self, theta, X, y):
        return (y - X @ theta) / self.noise_variance

    def log_likelihood(self, theta, idx=None):
        theta = self._check(theta)
        X, y = self._rows(idx)
        r = y - X @ theta
        return -0.5 * (r**2 / self.noise_variance + np.log(2 * np.pi * self.noise_variance))

    def exact_posterior(self) -> GaussianPosterior:
        return conjugate_posterior(
            self.dataset.X, self.dataset.y, self._lam, self.noise_variance
        )

    def fisher_information(self):
        """Per-datum Fisher information (1/sigma^2) X^T X / N."""
        X = self.dataset.X
        return X.T @ X / (self.noise_variance * self.N)


def conjugate_posterior(X, y, prior_precision, noise_variance) -> GaussianPosterior:
    """Exact posterior of Bayesian linear regression with a zero-mean prior.

    ``X`` may have zero rows, in which case the prior is returned.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    dim = X.shape[1]
    precision = _prior_matrix(prior_precision, dim) + X.T @ X / noise_variance
    try:
        c, low = linalg.cho_factor(precision, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationError("posterior precision is singular") from exc
    cov = linalg.cho_solve((c, low), np.eye(dim))
    mean = linalg.cho_solve((c, low), X.T @ y / noise_variance)
    return GaussianPosterior(mean, 0.5 * (cov + cov.T))


@dataclass(frozen=True)
class LogisticRegressionModel(Model):
    """Bernoulli labels in {0, 1} with P(y = 1) = sigmoid(theta^T x)."""

    def __post_init__(self):
        super().__post_init__()
        y = self.dataset.y
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("logistic regression labels must be 0 or 1; use remap_labels")

    def _residual(self, theta, X, y):
        return y - expit(X @ theta)

    def log_likelihood(self, theta, idx=None):
        theta = self._check(theta)
        X, y = self._rows(idx)
        a = X @ theta
        return y * log_expit(a) + (1 - y) * log_expit(-a)

    def neg_hessian(self, theta):
        theta = self._check(theta)
        X = self.dataset.X
        p = expit(X @ theta)
        return self._lam + (X * (p * (1 - p))[:, None]).T @ X

    def laplace_approximation(self, theta0=None, tol=1e-10, max_iter=100) -> GaussianPosterior:
        """Newton iterations to the MAP; covariance is the inverse negative Hessian."""
        theta = np.zeros(self.dim) if theta0 is None else np.array(theta0, dtype=float)
        for _ in range(max_iter):
            step = np.linalg.solve(self.neg_hessian(theta), self.grad_log_posterior(theta))
            theta = theta + step
            if np.max(np.abs(step)) < tol:
                break
        return GaussianPosterior(theta, np.linalg.inv(self.neg_hessian(theta)))

    def grid_posterior(self, points=401, width=6.0):
        """Posterior moments by dense-grid quadrature (D <= 2).

        The grid spans +-``width`` marginal standard deviations of the Laplace
        approximation with ``points`` nodes per axis.
        """
        return grid_moments(self, self.laplace_approximation(), points=points, width=width)


@dataclass(frozen=True)
class GridMoments:
    """Mean and covariance of a posterior computed on a tensor grid."""

    mean: np.ndarray
    covariance: np.ndarray
    axes: tuple
    density: np.ndarray


def grid_moments(model: Model, around: GaussianPosterior, points=401, width=6.0) -> GridMoments:
    """Normalize exp(log posterior) on a grid centred on ``around``.

    Memory grows as points**D; intended for D <= 3.
    """
    if model.dim > 3:
        raise DimensionError("grid quadrature supports D <= 3")
    sd = np.sqrt(np.diag(around.covariance))
    axes = tuple(
        np.linspace(m - width * s, m + width * s, points) for m, s in zip(around.mean, sd)
    )
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.dim)
    logp = _batched_logpost(model, mesh)
    w = np.exp(logp - logp.max())
    w /= w.sum()
    mean = w @ mesh
    dev = mesh - mean
    cov = (dev * w[:, None]).T @ dev
    cell = np.prod([a[1] - a[0] for a in axes])
    density = (w / cell).reshape((points,) * model.dim)
    return GridMoments(mean, 0.5 * (cov + cov.T), axes, density)


def _batched_logpost(model, thetas, chunk=4096):
    out = np.empty(len(thetas))
    X, y = model.dataset.X, model.dataset.y
    for start in range(0, len(thetas), chunk):
        th = thetas[start:start + chunk]
        a = X @ th.T  # (N, m)
        if isinstance(model, LogisticRegressionModel):
            ll = (y[:, None] * log_expit(a) + (1 - y[:, None]) * log_expit(-a)).sum(axis=0)
        elif isinstance(model, LinearRegressionModel):
            r = y[:, None] - a
            ll = -0.5 * (r**2).sum(axis=0) / model.noise_variance
        else:
            ll = np.array([model.log_likelihood(t).sum() for t in th])
        lp = -0.5 * np.einsum("md,de,me->m", th, model._lam, th)
        out[start:start + chunk] = ll + lp
    return out


class GaussianTarget:
    """A fixed Gaussian density exposing the full-data interface HMC needs.

    Not a data model: it has no scores, only a log density and its gradient.
    Used to validate the HMC reference sampler on a known target.
    """

    def __init__(self, mean, covariance):
        self.posterior = GaussianPosterior(np.atleast_1d(mean), np.atleast_2d(covariance))
        self._prec = self.posterior.precision

    @property
    def dim(self):
        return self.posterior.mean.size

    def log_unnormalized_posterior(self, theta):
        d = np.asarray(theta, dtype=float) - self.posterior.mean
        return -0.5 * d @ self._prec @ d

    def grad_log_posterior(self, theta):
        return -self._prec @ (np.asarray(theta, dtype=float) - self.posterior.mean)
