"""Command-line entry point: ``qmm-detector {run,sweep,oracle-suite,describe-config}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load, preset
from .experiments import run_experiment, sweep
from .master import IntegrationError as MasterIntegrationError
from .qsd import IntegrationError


def _config(args) -> ExperimentConfig:
    if args.config:
        cfg = load(args.config)
    elif getattr(args, "experiment", None):
        cfg = preset(args.experiment)
    else:
        raise ConfigError("give a config file or --experiment TAG")
    top = {}
    if getattr(args, "seed", None) is not None:
        top["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        top["workers"] = args.workers
    if getattr(args, "out", None) is not None:
        top["output"] = str(args.out)
    if top:
        cfg = ExperimentConfig(cfg.experiment, cfg.params, cfg.run, cfg.analysis,
                               top.get("seed", cfg.seed), top.get("workers", cfg.workers),
                               top.get("output", cfg.output))
    return cfg


def _parse_value(text: str):
    return yaml.safe_load(text)


def _report(bundle) -> int:
    for m in bundle.messages:
        print(f"error: {m}", file=sys.stderr)
    print(f"{'ok' if bundle.ok else 'FAILED'}: {bundle.out_dir}")
    return 0 if bundle.ok else 1


def cmd_run(args) -> int:
    cfg = _config(args)
    bundle = run_experiment(cfg)
    summary = (bundle.out_dir / "summary.txt").read_text()
    print(summary, end="")
    return _report(bundle)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = [_parse_value(v) for v in args.values]
    bundle = sweep(cfg, args.parameter, values)
    print((bundle.out_dir / "aggregate.csv").read_text(), end="")
    return _report(bundle)


def cmd_oracle_suite(args) -> int:
    args.config = None
    args.experiment = "oracle-suite"
    cfg = _config(args)
    bundle = run_experiment(cfg)
    width = max(len(r["check"]) for r in bundle.rows)
    for r in bundle.rows:
        flag = "PASS" if r["passed"] else "FAIL"
        print(f"{flag}  {r['check']:<{width}}  {r['value']:.3e}  (tol {r['tolerance']:.0e})")
    return _report(bundle)


def cmd_describe(args) -> int:
    cfg = _config(args)
    print(cfg.dump(), end="")
    if args.sweepable:
        print("# sweepable: " + ", ".join(cfg.sweepable()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmm-detector", description="Quantum metamaterial photon detector simulations.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("config", nargs="?", help="YAML experiment config")
            p.add_argument("--experiment", "-e", choices=EXPERIMENTS, help="use a preset instead of a file")
        p.add_argument("--out", "-o", type=Path, help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--workers", "-j", type=int, help="max parallel processes (overrides the config)")

    p = sub.add_parser("run", help="run one experiment and write its output bundle")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run an experiment for each value of one parameter")
    common(p)
    p.add_argument("--parameter", "-p", required=True, help="model parameter or run-control field")
    p.add_argument("--values", nargs="+", required=True, help="values (parsed as YAML scalars/lists)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-suite", help="run every closed-form comparison and print a pass/fail table")
    common(p, config=False)
    p.set_defaults(func=cmd_oracle_suite)

    p = sub.add_parser("describe-config", help="print the fully resolved config")
    p.add_argument("config", nargs="?", help="YAML experiment config")
    p.add_argument("--experiment", "-e", choices=EXPERIMENTS)
    p.add_argument("--sweepable", action="store_true", help="also list valid sweep parameters")
    p.set_defaults(func=cmd_describe)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, IntegrationError, MasterIntegrationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
