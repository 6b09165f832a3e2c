"""Config-driven sampler comparisons.

An experiment config (TOML) names a model, a dataset (CSV path or
synthetic generator), optional random projection, a list of samplers
each with a knob sweep, and the chain length.  Every sweep entry becomes
an independent run whose seed is ``master_seed ^ run_index``.

Outputs in the run directory::

    run_000.csv         trace: t,wall_s,theta_0,...,theta_{D-1}
    run_000.json        config snapshot sufficient to reproduce the trace
    report.json         diagnostics for all runs
    plot_data.csv       sampler,knob_value,inverse_atuc,E1_at_T,E2_at_T
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import diagnostics as diag
from .model import (
    Dataset,
    LinearRegressionModel,
    LogisticRegressionModel,
    load_csv,
)
from .samplers import (
    SAMPLER_CONFIGS,
    HmcConfig,
    ScheduleConfig,
    config_from_json,
    config_to_json,
    run_chain,
)

log = logging.getLogger(__name__)

KNOBS = {"sgfs": "alpha", "sgld": "eps", "sgd": "a", "hmc": "leapfrog_steps"}


class ConfigError(ValueError):
    pass


# -- data -----------------------------------------------------------------


def generate_synthetic(kind, N, D, seed, noise_variance=None, *, feature_correlation=0.0,
                       theta0=None):
    """Draw a linear or logistic dataset at a random true parameter.

    Features are N(0, S) with unit variances and equal off-diagonal
    correlation ``feature_correlation`` (0 gives the identity).
    Returns ``(dataset, metadata)``.
    """
    if N < 1 or D < 1:
        raise ValueError("need N >= 1 and D >= 1")
    rng = np.random.default_rng(seed)
    theta0 = rng.standard_normal(D) if theta0 is None else np.asarray(theta0, dtype=float)
    S = np.full((D, D), feature_correlation) + (1 - feature_correlation) * np.eye(D)
    X = rng.standard_normal((N, D)) @ np.linalg.cholesky(S).T
    a = X @ theta0
    if kind == "linear":
        if noise_variance is None or not noise_variance > 0:
            raise ValueError("linear data needs noise_variance > 0")
        y = a + math.sqrt(noise_variance) * rng.standard_normal(N)
    elif kind == "logistic":
        y = (rng.random(N) < 1.0 / (1.0 + np.exp(-a))).astype(float)
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    meta = {"kind": kind, "N": N, "D": D, "seed": seed, "theta0": theta0.tolist(),
            "noise_variance": noise_variance if kind == "linear" else None,
            "feature_correlation": feature_correlation}
    return Dataset(X, y), meta


def random_projection(dataset: Dataset, D_out, seed) -> Dataset:
    """Map features through a fixed Gaussian matrix with N(0, 1/D_out) entries."""
    if not 1 <= D_out <= dataset.dim:
        raise ValueError(f"projection dimension must be in [1, {dataset.dim}]")
    R = projection_matrix(dataset.dim, D_out, seed)
    return dataset.with_features(dataset.X @ R.T)


def projection_matrix(D_in, D_out, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((D_out, D_in)) / math.sqrt(D_out)


# -- config ---------------------------------------------------------------


@dataclass
class ModelSpec:
    kind: str = "linear"
    prior_precision: float = 1.0
    noise_variance: float = 1.0


@dataclass
class DatasetSpec:
    path: str | None = None
    N: int = 2000
    D: int = 5
    theta0_seed: int = 0
    feature_correlation: float = 0.0
    projection: int | None = None
    projection_seed: int = 0


@dataclass
class ReferenceSpec:
    """``auto`` uses an oracle when the model has one, else a long HMC run."""

    kind: str = "auto"
    grid_points: int = 401
    hmc_T: int = 20000
    hmc_burn_in: int = 2000
    hmc_leapfrog_steps: int = 20
    hmc_step_size: float = 0.01
    hmc_seed: int = 12345


@dataclass
class SamplerSpec:
    kind: str
    values: list
    params: dict = field(default_factory=dict)

    def configs(self):
        knob = KNOBS[self.kind]
        for v in self.values:
            yield v, build_sampler_config(self.kind, {**self.params, knob: v})


@dataclass
class ExperimentConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    samplers: list = field(default_factory=list)
    T: int = 10000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    out: str = "runs"
    workers: int = 1
    checkpoints: int = 20
    timing: str = "wall"

    def validate(self):
        if not self.samplers:
            raise ConfigError("experiment needs at least one sampler")
        if self.model.kind not in ("linear", "logistic"):
            raise ConfigError(f"unknown model kind {self.model.kind!r}")
        if not self.T > self.burn_in >= 0:
            raise ConfigError("need T > burn_in >= 0")
        if self.thin < 1 or self.workers < 1:
            raise ConfigError("thin and workers must be >= 1")
        if self.timing not in ("wall", "off"):
            raise ConfigError("timing must be 'wall' or 'off'")
        if self.reference.kind not in ("auto", "oracle", "hmc"):
            raise ConfigError(f"unknown reference kind {self.reference.kind!r}")
        for s in self.samplers:
            if not s.values:
                raise ConfigError(f"{s.kind}: knob sweep list is empty")
            list(s.configs())
        return self

    def runs(self):
        """(run index, sampler kind, knob value, sampler config) for every sweep entry."""
        i = 0
        for s in self.samplers:
            for v, cfg in s.configs():
                yield i, s.kind, v, cfg
                i += 1

    def to_json(self):
        d = asdict(self)
        d["samplers"] = [{"kind": s.kind, KNOBS[s.kind]: s.values, **s.params}
                         for s in self.samplers]
        return d


def _section(cls, raw, where):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {sorted(unknown)}")
    return cls(**raw)


def build_sampler_config(kind, params):
    if kind not in SAMPLER_CONFIGS:
        raise ConfigError(f"unknown sampler kind {kind!r}")
    params = dict(params)
    if kind in ("sgld", "sgd") and {"a", "b", "delta"} & set(params):
        try:
            params["schedule"] = ScheduleConfig(params.pop("a"), params.pop("b"),
                                                params.pop("delta"))
        except KeyError as exc:
            raise ConfigError(f"{kind}: schedule needs a, b and delta") from exc
    cls = SAMPLER_CONFIGS[kind]
    known = {f.name for f in fields(cls)}
    unknown = set(params) - known
    if unknown:
        raise ConfigError(f"{kind}: unknown keys {sorted(unknown)}")
    try:
        return cls(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{kind}: {exc}") from exc


def parse_config(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    samplers = []
    for j, s in enumerate(raw.pop("samplers", [])):
        s = dict(s)
        kind = s.pop("kind", None)
        if kind not in KNOBS:
            raise ConfigError(f"samplers[{j}]: unknown kind {kind!r}")
        values = s.pop(KNOBS[kind], None)
        if values is None:
            raise ConfigError(f"samplers[{j}]: missing knob {KNOBS[kind]!r}")
        values = list(values) if isinstance(values, (list, tuple)) else [values]
        samplers.append(SamplerSpec(kind, values, s))
    model = _section(ModelSpec, raw.pop("model", None), "model")
    dataset = _section(DatasetSpec, raw.pop("dataset", None), "dataset")
    reference = _section(ReferenceSpec, raw.pop("reference", None), "reference")
    cfg = _section(ExperimentConfig, raw, "top level")
    cfg.model, cfg.dataset, cfg.reference, cfg.samplers = model, dataset, reference, samplers
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        return parse_config(tomllib.load(fh))


# -- model and reference ------------------------------------------------------


def build_model(cfg: ExperimentConfig):
    ds = cfg.dataset
    m = cfg.model
    logistic = m.kind == "logistic"
    if ds.path is not None:
        data = load_csv(ds.path, binary_labels=logistic)
    else:
        data, _ = generate_synthetic(m.kind, ds.N, ds.D, ds.theta0_seed,
                                     None if logistic else m.noise_variance,
                                     feature_correlation=ds.feature_correlation)
    if ds.projection is not None:
        data = random_projection(data, ds.projection, ds.projection_seed)
    if logistic:
        return LogisticRegressionModel(data, m.prior_precision)
    return LinearRegressionModel(data, m.prior_precision, m.noise_variance)


def reference_moments(model, spec: ReferenceSpec):
    """``(MomentSummary, label)`` standing in for the true posterior moments."""
    if spec.kind in ("auto", "oracle"):
        if isinstance(model, LinearRegressionModel):
            post = model.exact_posterior()
            return diag.MomentSummary.exact(post.mean, post.covariance), "conjugate"
        if isinstance(model, LogisticRegressionModel) and model.dim <= 2:
            g = model.grid_posterior(points=spec.grid_points)
            return diag.MomentSummary.exact(g.mean, g.covariance), "grid"
        if spec.kind == "oracle":
            raise ConfigError("no oracle posterior for this model")
    start = None
    if isinstance(model, LogisticRegressionModel):
        start = model.laplace_approximation().mean
    hmc = HmcConfig(spec.hmc_leapfrog_steps, spec.hmc_step_size,
                    adapt_iterations=spec.hmc_burn_in)
    trace = run_chain(model, hmc, spec.hmc_T, spec.hmc_burn_in, seed=spec.hmc_seed,
                      theta0=start, clock=None)
    return diag.running_moments(trace), "hmc"


# -- traces ---------------------------------------------------------------


def write_trace(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "wall_s"] + [f"theta_{j}" for j in range(trace.samples.shape[1])])
        for t, s, row in zip(trace.t, trace.timestamps, trace.samples):
            w.writerow([int(t), repr(float(s))] + [repr(float(v)) for v in row])


def read_trace(path):
    """``(t, wall_s, samples)`` arrays from a trace CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0].astype(np.int64), data[:, 1], data[:, 2:]


def checkpoint_counts(n, k):
    if n < 2:
        return []
    return sorted({int(round(c)) for c in np.geomspace(2, n, num=max(k, 1))} | {n})


def summarize_run(samples, wall_s, ref, checkpoints):
    """Diagnostics for one trace: error curve, mean ACT, ATUC."""
    out = {"samples": len(samples)}
    curve = diag.error_curve(samples, ref, checkpoint_counts(len(samples), checkpoints))
    out["errors"] = [{"count": c, "E1": e1, "E2": e2} for c, e1, e2 in curve]
    out["E1"], out["E2"] = (curve[-1][1], curve[-1][2]) if curve else (None, None)
    try:
        act = diag.mean_autocorrelation_time(samples)
    except (diag.ZeroVarianceError, ValueError):
        act = None
    out["mean_act"] = act
    tps = float(wall_s[-1]) / len(samples) if len(samples) else 0.0
    out["time_per_sample"] = tps
    out["atuc"] = act * tps if act is not None and tps > 0 else None
    out["inverse_atuc"] = 1.0 / out["atuc"] if out["atuc"] else None
    return out


# -- orchestration --------------------------------------------------------


@dataclass
class RunArtifact:
    trace_path: Path
    snapshot_path: Path
    report_path: Path
    snapshot: dict


def _execute(args):
    """Worker body: run one chain and write its trace.  Never raises."""
    model, cfg_json, T, burn_in, thin, seed, theta0, timing, trace_path = args
    cfg = config_from_json(cfg_json)
    try:
        trace = run_chain(model, cfg, T, burn_in, thin, seed=seed, theta0=theta0,
                          clock=None if timing == "off" else time.perf_counter)
    except Exception as exc:  # recorded in the report; the sweep continues
        return {"status": "failed", "error": type(exc).__name__, "message": str(exc),
                "iteration": getattr(exc, "iteration", getattr(exc, "t", None))}
    write_trace(trace_path, trace)
    res = {"status": "ok"}
    if "acceptance_rate" in trace.meta:
        res["acceptance_rate"] = trace.meta["acceptance_rate"]
        res["step_size"] = trace.meta["step_size"]
    return res


def run_experiment(cfg: ExperimentConfig, out=None, workers=None):
    """Run every sampler x knob entry, then write diagnostics and plot data."""
    cfg.validate()
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = workers or cfg.workers
    model = build_model(cfg)
    jobs, snapshots = [], []
    for i, kind, value, scfg in cfg.runs():
        seed = cfg.seed ^ i
        snap = {"run": i, "sampler": kind, "knob": KNOBS[kind], "knob_value": value,
                "seed": seed, "T": cfg.T, "burn_in": cfg.burn_in, "thin": cfg.thin,
                "timing": cfg.timing, "sampler_config": config_to_json(scfg),
                "experiment": cfg.to_json()}
        trace_path = out / f"run_{i:03d}.csv"
        jobs.append((model, snap["sampler_config"], cfg.T, cfg.burn_in, cfg.thin, seed,
                     None, cfg.timing, trace_path))
        snapshots.append(snap)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute, jobs))
    else:
        results = [_execute(j) for j in jobs]
    for snap, res in zip(snapshots, results):
        snap["result"] = res
        with open(out / f"run_{snap['run']:03d}.json", "w", encoding="utf-8") as fh:
            json.dump(snap, fh, indent=2, sort_keys=True)
            fh.write("\n")
        if res["status"] != "ok":
            log.warning("run %d (%s=%s) failed: %s", snap["run"], snap["knob"],
                        snap["knob_value"], res["message"])
    report_path = write_diagnostics(cfg, model, snapshots, out)
    return [RunArtifact(out / f"run_{s['run']:03d}.csv", out / f"run_{s['run']:03d}.json",
                        report_path, s) for s in snapshots]


def write_diagnostics(cfg, model, snapshots, out):
    """Evaluate each successful trace against the reference; write report and plot data."""
    out = Path(out)
    ref, label = reference_moments(model, cfg.reference)
    runs = []
    for snap in snapshots:
        entry = {k: snap[k] for k in ("run", "sampler", "knob", "knob_value", "seed")}
        res = snap.get("result", {"status": "ok"})
        entry.update(res)
        trace_path = out / f"run_{snap['run']:03d}.csv"
        if res["status"] == "ok" and trace_path.exists():
            _, wall_s, samples = read_trace(trace_path)
            entry.update(summarize_run(samples, wall_s, ref, cfg.checkpoints))
        runs.append(entry)
    report = {"reference": label, "reference_mean": ref.mean.tolist(),
              "reference_covariance": ref.covariance.tolist(), "runs": runs}
    report_path = out / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    write_plot_data(out / "plot_data.csv", [report])
    return report_path


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


PLOT_COLUMNS = ["sampler", "knob_value", "inverse_atuc", "E1_at_T", "E2_at_T"]


def write_plot_data(path, reports):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for report in reports:
            for r in report["runs"]:
                if r.get("status") != "ok":
                    continue
                w.writerow([r["sampler"], r["knob_value"], _fmt(r.get("inverse_atuc")),
                            _fmt(r.get("E1")), _fmt(r.get("E2"))])


def _fmt(v):
    return "" if v is None else repr(float(v))


def diagnose(cfg: ExperimentConfig, out=None):
    """Recompute report.json and plot_data.csv from traces already on disk."""
    out = Path(out or cfg.out)
    snapshots = []
    for p in sorted(out.glob("run_*.json")):
        with open(p, encoding="utf-8") as fh:
            snapshots.append(json.load(fh))
    if not snapshots:
        raise FileNotFoundError(f"no run snapshots in {out}")
    for snap in snapshots:
        trace = out / f"run_{snap['run']:03d}.csv"
        if not trace.exists():
            snap["result"] = {"status": "failed", "error": "MissingTrace",
                              "message": f"{trace} not found"}
    return write_diagnostics(cfg, build_model(cfg), snapshots, out)


def compare(report_paths, out_path):
    reports = []
    for p in report_paths:
        with open(p, encoding="utf-8") as fh:
            reports.append(json.load(fh))
    write_plot_data(out_path, reports)
    return Path(out_path)
