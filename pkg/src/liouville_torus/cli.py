"""Command line: ``liouville-torus <experiment> [--config PATH] [--seed S] ...``."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, ExperimentConfig, load_config
from .experiments import EXIT_CONFIG, EXPERIMENTS, run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="liouville-torus",
                                description="Run a Liouville-on-the-torus verification experiment.")
    p.add_argument("experiment", help="one of: " + ", ".join(EXPERIMENTS))
    p.add_argument("--config", help="INI configuration file (defaults are used when omitted)")
    p.add_argument("--seed", type=int, help="override [mc] seed")
    p.add_argument("--replicas", type=int, help="override [mc] replicas")
    p.add_argument("--out", help="output directory (overrides [output] dir)")
    p.add_argument("--override-seiberg", action="store_true",
                   help="run even when the admissibility checks fail")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
    except (OSError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = cfg.replace("experiment", name=args.experiment)
    if args.seed is not None:
        cfg = cfg.replace("mc", seed=args.seed)
    if args.replicas is not None:
        cfg = cfg.replace("mc", replicas=args.replicas)
    outcome = run_experiment(cfg, args.out, args.override_seiberg)
    stream = sys.stdout if outcome.exit_code == 0 else sys.stderr
    print(outcome.message, file=stream)
    return outcome.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
