"""Stochastic-gradient samplers and the HMC reference chain.

All chains share one convention: ``grad`` is the (minibatch estimate of
the) gradient of the log posterior, ``grad_log_prior + N * mean_score``,
and every step ascends it.

Stochastic Gradient Fisher Scoring (SGFS) is parameterized by
``alpha = 2 / sqrt(eps)`` so that ``4 B / eps == alpha**2 * B``;
``alpha == 0`` is the infinite-step regime with no injected noise.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import ClassVar

import numpy as np
from scipy import linalg

from .fisher import (
    DIAGONAL,
    FULL,
    FisherEstimate,
    default_jitter,
    estimate_from_scores,
    online_update,
    regularized,
)
from .model import GaussianPosterior


class DivergenceError(FloatingPointError):
    """The chain produced a non-finite state."""

    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} (iteration {t})")
        self.t = t


class ConditioningError(np.linalg.LinAlgError):
    """The SGFS preconditioner could not be factorized."""


class ConfigurationError(ValueError):
    pass


def alpha_to_eps(alpha):
    return math.inf if alpha == 0 else (2.0 / alpha) ** 2


def eps_to_alpha(eps):
    return 0.0 if math.isinf(eps) else 2.0 / math.sqrt(eps)


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class ScheduleConfig:
    """Polynomial step size ``a * (b + t) ** -delta``."""

    a: float
    b: float
    delta: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ConfigurationError("schedule a and b must be positive")
        if not 0 <= self.delta <= 3:
            raise ConfigurationError("schedule delta must lie in [0, 3]")

    def __call__(self, t):
        return self.a * (self.b + t) ** (-self.delta)


GAMMA_FISHER = "gamma_fisher"


@dataclass(frozen=True)
class SgfsConfig:
    """SGFS knobs.

    ``B`` is ``"gamma_fisher"`` (B = gamma * N * fisher estimate), a positive
    float ``b`` (B = b * identity) or an explicit SPD matrix.  ``jitter`` is
    relative to the mean diagonal of the Fisher estimate.  A ``schedule``,
    when given, anneals eps per iteration and overrides ``alpha``.
    """

    kind: ClassVar[str] = "sgfs"

    n: int = 100
    alpha: float = 0.0
    B: object = GAMMA_FISHER
    form: str = FULL
    jitter: float = 1e-8
    freeze_after: int | None = None
    schedule: ScheduleConfig | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ConfigurationError("SGFS needs minibatches of at least two items")
        if self.alpha < 0:
            raise ConfigurationError("alpha must be non-negative")
        if self.form not in (FULL, DIAGONAL):
            raise ConfigurationError(f"unknown form {self.form!r}")
        if isinstance(self.B, str):
            if self.B != GAMMA_FISHER:
                raise ConfigurationError(f"unknown B specification {self.B!r}")
        elif np.ndim(self.B) == 0:
            if not float(self.B) > 0:
                raise ConfigurationError("scaled-identity B needs b > 0")
        else:
            B = np.asarray(self.B, dtype=float)
            if B.ndim != 2 or B.shape[0] != B.shape[1] or not np.allclose(B, B.T):
                raise ConfigurationError("explicit B must be a symmetric matrix")
            object.__setattr__(self, "B", B)

    def gamma(self, N):
        return (N + self.n) / self.n

    def alpha_at(self, t):
        return self.alpha if self.schedule is None else eps_to_alpha(self.schedule(t))


@dataclass(frozen=True)
class SgldConfig:
    """SGLD with fixed ``eps`` or an annealing ``schedule``; ``C`` defaults to identity."""

    kind: ClassVar[str] = "sgld"

    n: int = 100
    eps: float | None = None
    schedule: ScheduleConfig | None = None
    C: np.ndarray | None = None

    def __post_init__(self):
        if (self.eps is None) == (self.schedule is None):
            raise ConfigurationError("SGLD needs exactly one of eps or schedule")
        if self.eps is not None and not self.eps > 0:
            raise ConfigurationError("SGLD step size must be positive")

    def eps_at(self, t):
        return self.eps if self.schedule is None else self.schedule(t)


@dataclass(frozen=True)
class SgdConfig:
    kind: ClassVar[str] = "sgd"

    schedule: ScheduleConfig
    n: int = 100


@dataclass(frozen=True)
class HmcConfig:
    kind: ClassVar[str] = "hmc"

    leapfrog_steps: int = 10
    step_size: float = 0.1
    target_accept: float = 0.8
    adapt_iterations: int = 0

    def __post_init__(self):
        if self.leapfrog_steps < 0 or not self.step_size > 0:
            raise ConfigurationError("HMC needs L >= 0 and a positive step size")
        if not 0 < self.target_accept < 1:
            raise ConfigurationError("target acceptance must be in (0, 1)")


SAMPLER_CONFIGS = {c.kind: c for c in (SgfsConfig, SgldConfig, SgdConfig, HmcConfig)}


def config_to_json(cfg):
    d = {"kind": cfg.kind}
    for k, v in asdict(cfg).items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        d[k] = v
    return d


def config_from_json(d):
    d = dict(d)
    cls = SAMPLER_CONFIGS[d.pop("kind")]
    if d.get("schedule") is not None:
        d["schedule"] = ScheduleConfig(**d["schedule"])
    for key in ("B", "C"):
        if isinstance(d.get(key), list):
            d[key] = np.asarray(d[key], dtype=float)
    return cls(**d)


# -- chain state ------------------------------------------------------------


@dataclass
class ChainState:
    """Loop state owned by a single chain."""

    theta: np.ndarray
    rng: np.random.Generator
    t: int = 0
    fisher: FisherEstimate | None = None
    wall_time: float = 0.0
    step_size: float | None = None
    log_step_avg: float | None = None

    @classmethod
    def start(cls, theta0, seed, cfg=None):
        theta = np.array(theta0, dtype=float)
        fisher = None
        step_size = None
        if isinstance(cfg, SgfsConfig):
            fisher = FisherEstimate.initial(theta.size, cfg.form)
        elif isinstance(cfg, HmcConfig):
            step_size = cfg.step_size
        return cls(theta, np.random.default_rng(seed), 0, fisher, 0.0, step_size)


def _advance(state, theta, **changes):
    if not np.all(np.isfinite(theta)):
        raise DivergenceError("non-finite parameter after step", t=state.t + 1)
    return replace(state, theta=theta, t=state.t + 1, **changes)


def draw_minibatch(rng, N, n):
    """n distinct indices drawn uniformly without replacement."""
    if not 1 <= n <= N:
        raise ConfigurationError(f"minibatch size {n} not in [1, {N}]")
    return rng.choice(N, size=n, replace=False)


def _total_gradient(model, theta, G):
    return model.grad_log_prior(theta) + model.N * G.mean(axis=0)


# -- SGFS -----------------------------------------------------------------


def resolve_B(B_spec, gamma_fisher, form):
    """The B matrix (or its diagonal, for the diagonal form) for one iteration."""
    dim = gamma_fisher.shape[0]
    if isinstance(B_spec, str):
        return gamma_fisher
    if np.ndim(B_spec) == 0:
        b = float(B_spec)
        return b * np.eye(dim) if form == FULL else np.full(dim, b)
    B = np.asarray(B_spec, dtype=float)
    if B.shape != (dim, dim):
        raise ConfigurationError(f"explicit B has shape {B.shape}, expected ({dim}, {dim})")
    return B if form == FULL else np.diag(B).copy()


def sgfs_update(theta, grad, gamma_fisher, B, alpha, z=None):
    """theta + 2 (G + alpha^2 B)^{-1} (grad + eta), eta ~ N(0, alpha^2 B).

    ``gamma_fisher`` is gamma * N * fisher estimate.  One-dimensional
    ``gamma_fisher`` and ``B`` select the diagonal algorithm.  ``z`` are the
    standard normals behind eta; ``None`` means eta = 0.
    """
    a2 = alpha * alpha
    if np.ndim(gamma_fisher) == 1:
        rhs = grad if z is None or alpha == 0 else grad + alpha * np.sqrt(B) * z
        denom = gamma_fisher + a2 * B
        if not np.all(denom > 0):
            raise ConditioningError("diagonal preconditioner is not positive")
        return theta + 2.0 * rhs / denom
    rhs = grad
    if z is not None and alpha != 0:
        try:
            L = np.linalg.cholesky(B)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError("B is not positive definite") from exc
        rhs = grad + alpha * (L @ z)
    try:
        factor = linalg.cho_factor(gamma_fisher + a2 * B, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise ConditioningError("preconditioner is not positive definite") from exc
    return theta + 2.0 * linalg.cho_solve(factor, rhs, check_finite=False)


def sgfs_coefficients(gamma_fisher, B, alpha):
    """Drift matrix 2 (G + alpha^2 B)^{-1} and covariance of the preconditioned noise."""
    P = 2.0 * np.linalg.inv(gamma_fisher + alpha * alpha * B)
    return P, alpha * alpha * P @ B @ P.T


def sgfs_preconditioner(eps, gamma, total_fisher, B):
    """C = 4 (eps gamma I_N + 4 B)^{-1}, the step-size-explicit SGFS preconditioner.

    With this C the injected noise covariance eps C - (eps^2/4) gamma C I_N C
    equals eps C B C, and eps C / 2 is the drift matrix of sgfs_update at
    alpha = 2 / sqrt(eps).
    """
    M = eps * gamma * np.asarray(total_fisher, dtype=float) + 4.0 * np.asarray(B, dtype=float)
    return 4.0 * np.linalg.inv(M)


def injected_noise_covariance(eps, gamma, total_fisher, C):
    """eps C - (eps^2/4) gamma C I_N C."""
    C = np.asarray(C, dtype=float)
    return eps * C - 0.25 * eps * eps * gamma * C @ np.asarray(total_fisher, dtype=float) @ C


def sgfs_step(state: ChainState, model, cfg: SgfsConfig, batch=None, z=None) -> ChainState:
    """One iteration of SGFS: minibatch, Fisher update, preconditioned move."""
    theta = state.theta
    N = model.N
    idx = draw_minibatch(state.rng, N, cfg.n) if batch is None else batch
    G = model.scores(theta, idx)
    fisher = state.fisher
    if cfg.freeze_after is None or fisher.t < cfg.freeze_after:
        fisher = online_update(fisher, estimate_from_scores(G, cfg.form))
    reg = regularized(fisher, default_jitter(fisher, cfg.jitter))
    gamma = cfg.gamma(N)
    A = gamma * N * reg.value
    B = resolve_B(cfg.B, A, cfg.form)
    alpha = cfg.alpha_at(state.t + 1)
    if z is None and alpha != 0:
        z = state.rng.standard_normal(theta.size)
    new = sgfs_update(theta, _total_gradient(model, theta, G), A, B, alpha, z)
    return _advance(state, new, fisher=fisher)


# -- SGLD / SGD -------------------------------------------------------------


def sgld_update(theta, grad, eps, C=None, z=None):
    """theta + (eps C / 2) grad + nu, nu ~ N(0, eps C)."""
    if C is None:
        drift = 0.5 * eps * grad
        noise = 0.0 if z is None else math.sqrt(eps) * z
    else:
        C = np.asarray(C, dtype=float)
        drift = 0.5 * eps * (C @ grad)
        noise = 0.0 if z is None else math.sqrt(eps) * (np.linalg.cholesky(C) @ z)
    return theta + drift + noise


def sgld_step(state: ChainState, model, eps, C=None, *, n, batch=None, z=None) -> ChainState:
    if not eps > 0:
        raise ConfigurationError("SGLD step size must be positive")
    theta = state.theta
    idx = draw_minibatch(state.rng, model.N, n) if batch is None else batch
    grad = _total_gradient(model, theta, model.scores(theta, idx))
    if z is None:
        z = state.rng.standard_normal(theta.size)
    return _advance(state, sgld_update(theta, grad, eps, C, z))


def sgd_step(state: ChainState, model, cfg: SgdConfig, batch=None) -> ChainState:
    """Stochastic gradient ascent on the log posterior with annealed steps."""
    theta = state.theta
    idx = draw_minibatch(state.rng, model.N, cfg.n) if batch is None else batch
    grad = _total_gradient(model, theta, model.scores(theta, idx))
    return _advance(state, theta + cfg.schedule(state.t + 1) * grad)


# -- exact-Gaussian chain ------------------------------------------------------


def _noise_cov(eps, C, precision):
    return eps * C - 0.25 * eps * eps * C @ precision @ C


def gaussian_chain_step(theta, target: GaussianPosterior, eps, C, rng, z=None):
    """Affine chain with invariant density ``target`` at any admissible step.

    ``theta`` may be a single (D,) point or an (M, D) batch advanced
    independently.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    prec = target.precision
    try:
        L = np.linalg.cholesky(_noise_cov(eps, C, prec))
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError("injected noise covariance is not positive definite; "
                                 "step size too large for this C") from exc
    theta = np.asarray(theta, dtype=float)
    drift = -0.5 * eps * (theta - target.mean) @ (C @ prec).T
    if z is None:
        z = rng.standard_normal(theta.shape)
    return theta + drift + z @ L.T


def gaussian_chain_moments(mu, Sigma, target: GaussianPosterior, eps, C):
    """Exact one-step map of the mean and covariance under gaussian_chain_step."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    prec = target.precision
    A = np.eye(len(mu)) - 0.5 * eps * C @ prec
    mu_next = A @ mu + 0.5 * eps * C @ prec @ target.mean
    Sigma_next = A @ Sigma @ A.T + _noise_cov(eps, C, prec)
    return mu_next, Sigma_next


# -- HMC ------------------------------------------------------------------


def leapfrog(q, p, grad_fn, h, L):
    p = p + 0.5 * h * grad_fn(q)
    for i in range(L):
        q = q + h * p
        g = grad_fn(q)
        p = p + (h if i < L - 1 else 0.5 * h) * g
    if L == 0:
        p = p - 0.5 * h * grad_fn(q)
    return q, p


def hmc_step(state: ChainState, model, cfg: HmcConfig):
    """Full-data HMC with identity mass; returns ``(state, accepted)``.

    While ``state.t < cfg.adapt_iterations`` the log step size moves toward
    the target acceptance with a decaying gain.  At the end of adaptation the
    step is set to a weighted average of the visited log step sizes and then
    stays fixed.
    """
    q = state.theta
    h = state.step_size if state.step_size is not None else cfg.step_size
    p = state.rng.standard_normal(q.size)
    H0 = -model.log_unnormalized_posterior(q) + 0.5 * p @ p
    with np.errstate(over="ignore", invalid="ignore"):
        q_new, p_new = leapfrog(q, p, model.grad_log_posterior, h, cfg.leapfrog_steps)
        H1 = -model.log_unnormalized_posterior(q_new) + 0.5 * p_new @ p_new
    log_ratio = H0 - H1
    if not (np.all(np.isfinite(q_new)) and np.isfinite(log_ratio)):
        accept_prob = 0.0
    else:
        accept_prob = 1.0 if log_ratio >= 0 else math.exp(log_ratio)
    u = state.rng.random()
    accepted = u < accept_prob
    log_avg = state.log_step_avg
    if state.t < cfg.adapt_iterations:
        k = state.t + 1
        h = h * math.exp(k ** -0.6 * (accept_prob - cfg.target_accept))
        w = k ** -0.75
        log_avg = math.log(h) if log_avg is None else w * math.log(h) + (1 - w) * log_avg
        if k == cfg.adapt_iterations:
            h = math.exp(log_avg)
    theta = q_new if accepted else q
    return _advance(state, theta, step_size=h, log_step_avg=log_avg), bool(accepted)


# -- driver ---------------------------------------------------------------


@dataclass
class Trace:
    """Retained post-burn-in samples.

    ``timestamps`` are cumulative sampling seconds since the end of burn-in
    at each retained sample.
    """

    samples: np.ndarray
    t: np.ndarray
    timestamps: np.ndarray
    meta: dict = field(default_factory=dict)
    final_state: ChainState | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.samples)

    @property
    def dim(self):
        return self.samples.shape[1]

    def time_per_sample(self):
        if len(self) == 0:
            return math.nan
        return float(self.timestamps[-1]) / len(self)


def step(state, model, cfg):
    """Advance ``state`` by one iteration of the sampler described by ``cfg``.

    Returns ``(state, accepted)``; ``accepted`` is None except for HMC.
    """
    if isinstance(cfg, SgfsConfig):
        return sgfs_step(state, model, cfg), None
    if isinstance(cfg, SgldConfig):
        return sgld_step(state, model, cfg.eps_at(state.t + 1), cfg.C, n=cfg.n), None
    if isinstance(cfg, SgdConfig):
        return sgd_step(state, model, cfg), None
    if isinstance(cfg, HmcConfig):
        return hmc_step(state, model, cfg)
    raise ConfigurationError(f"unknown sampler configuration {type(cfg).__name__}")


def run_chain(model, cfg, T, burn_in=0, thin=1, *, seed=0, theta0=None, state=None,
              clock=time.perf_counter) -> Trace:
    """Run ``T`` iterations and keep every ``thin``-th sample after ``burn_in``.

    Pass ``state`` (e.g. from a checkpoint) to continue an existing chain;
    ``seed`` and ``theta0`` are then ignored.  ``clock=None`` records zero
    timestamps, which makes the trace a pure function of its inputs.
    """
    if not T >= burn_in >= 0:
        raise ConfigurationError("need T >= burn_in >= 0")
    if thin < 1:
        raise ConfigurationError("thin must be at least 1")
    if state is None:
        theta0 = np.zeros(model.dim) if theta0 is None else theta0
        state = ChainState.start(theta0, seed, cfg)
    clock = clock or (lambda: 0.0)
    keep = (T - burn_in) // thin
    samples = np.empty((keep, state.theta.size))
    ts = np.empty(keep, dtype=np.int64)
    stamps = np.empty(keep)
    n_accept = n_prop = 0
    sampling_time = 0.0
    adapt = cfg.adapt_iterations if isinstance(cfg, HmcConfig) else 0
    j = 0
    for i in range(1, T + 1):
        t0 = clock()
        try:
            state, accepted = step(state, model, cfg)
        except (DivergenceError, np.linalg.LinAlgError, ConfigurationError) as exc:
            exc.iteration = state.t + 1
            raise
        dt = clock() - t0
        state.wall_time += dt
        if accepted is not None and state.t > adapt:
            n_prop += 1
            n_accept += accepted
        if i > burn_in:
            sampling_time += dt
            if (i - burn_in) % thin == 0:
                samples[j] = state.theta
                ts[j] = state.t
                stamps[j] = sampling_time
                j += 1
    meta = {"kind": cfg.kind, "config": config_to_json(cfg), "T": T, "burn_in": burn_in,
            "thin": thin, "seed": seed}
    if isinstance(cfg, HmcConfig):
        meta["acceptance_rate"] = n_accept / n_prop if n_prop else math.nan
        meta["step_size"] = state.step_size
    return Trace(samples, ts, stamps, meta, state)


# -- checkpoints ----------------------------------------------------------


def save_checkpoint(path, state: ChainState, cfg):
    """JSON checkpoint: sampler kind and config, theta, Fisher estimate, t, RNG state."""
    record = {
        "kind": cfg.kind,
        "config": config_to_json(cfg),
        "theta": state.theta.tolist(),
        "fisher": None if state.fisher is None else state.fisher.to_json(),
        "t": state.t,
        "wall_time": state.wall_time,
        "step_size": state.step_size,
        "log_step_avg": state.log_step_avg,
        "rng": state.rng.bit_generator.state,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns ``(state, cfg)``."""
    with open(path, encoding="utf-8") as fh:
        record = json.load(fh)
    rng_state = record["rng"]
    bitgen = getattr(np.random, rng_state["bit_generator"])()
    bitgen.state = rng_state
    fisher = None if record["fisher"] is None else FisherEstimate.from_json(record["fisher"])
    state = ChainState(
        theta=np.asarray(record["theta"], dtype=float),
        rng=np.random.Generator(bitgen),
        t=int(record["t"]),
        fisher=fisher,
        wall_time=float(record["wall_time"]),
        step_size=record["step_size"],
        log_step_avg=record["log_step_avg"],
    )
    return state, config_from_json(record["config"])
