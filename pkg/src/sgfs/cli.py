"""Command-line entry point: ``sgfs {generate,run,diagnose,compare}``.

Failures exit with status 1 and print a one-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .model import save_csv


def _add_common(p, config_required=True):
    p.add_argument("--config", type=Path, required=config_required, help="experiment TOML file")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, help="parallel runs (overrides the config)")


def build_parser():
    parser = argparse.ArgumentParser(prog="sgfs", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset CSV and JSON sidecar")
    _add_common(gen, config_required=False)
    gen.add_argument("--kind", choices=["linear", "logistic"], default="linear")
    gen.add_argument("--N", type=int, default=2000)
    gen.add_argument("--D", type=int, default=5)
    gen.add_argument("--noise-variance", type=float, default=1.0)
    gen.add_argument("--feature-correlation", type=float, default=0.0)

    run = sub.add_parser("run", help="run an experiment from a config file")
    _add_common(run)

    dia = sub.add_parser("diagnose", help="recompute diagnostics from existing traces")
    _add_common(dia)

    cmp_ = sub.add_parser("compare", help="merge reports into one plot-data CSV")
    cmp_.add_argument("reports", nargs="+", type=Path)
    cmp_.add_argument("--out", type=Path, required=True, help="output CSV or directory")
    return parser


def _experiment(args):
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = str(args.out)
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg.validate()


def cmd_generate(args):
    if args.config is not None:
        cfg = harness.load_config(args.config)
        kind, ds = cfg.model.kind, cfg.dataset
        N, D, seed, corr = ds.N, ds.D, ds.theta0_seed, ds.feature_correlation
        noise = cfg.model.noise_variance
    else:
        kind, N, D, corr, noise = args.kind, args.N, args.D, args.feature_correlation, \
            args.noise_variance
        seed = 0
    if args.seed is not None:
        seed = args.seed
    data, meta = harness.generate_synthetic(kind, N, D, seed,
                                            noise if kind == "linear" else None,
                                            feature_correlation=corr)
    out = args.out or Path("data")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{kind}_N{N}_D{D}_seed{seed}.csv"
    save_csv(data, path, meta)
    return {"dataset": str(path), "metadata": str(path.with_suffix(".json"))}


def cmd_run(args):
    cfg = _experiment(args)
    artifacts = harness.run_experiment(cfg)
    failed = [a.snapshot["run"] for a in artifacts if a.snapshot["result"]["status"] != "ok"]
    return {"out": cfg.out, "runs": len(artifacts), "failed": failed,
            "report": str(artifacts[0].report_path)}


def cmd_diagnose(args):
    cfg = _experiment(args)
    return {"report": str(harness.diagnose(cfg))}


def cmd_compare(args):
    out = args.out
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "plot_data.csv"
    return {"plot_data": str(harness.compare(args.reports, out))}


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "diagnose": cmd_diagnose,
            "compare": cmd_compare}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = COMMANDS[args.command](args)
    except Exception as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record), file=sys.stderr)
        return 1
    print(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
