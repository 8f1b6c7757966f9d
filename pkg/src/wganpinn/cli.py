"""Command-line experiment runner: train, evaluate, sweep, oracle."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import config as cfgmod
from . import runner
from .oracles import OracleError
from .training import TrainingAbort

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAINING = 3
EXIT_ORACLE = 4


def build_parser():
    p = argparse.ArgumentParser(
        prog="wganpinn",
        description="Adversarial physics-informed training with exact Wasserstein evaluation.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one model from a config file")
    t.add_argument("--config", required=True, help="YAML experiment config")
    t.add_argument("--seed", type=int, default=None, help="override config seed")
    t.add_argument("--out", default="runs/train", help="output directory")

    e = sub.add_parser("evaluate", help="recompute metrics for a checkpoint")
    e.add_argument("--config", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--seed", type=int, default=None, help="evaluation seed")
    e.add_argument("--out", default=None, help="metrics JSON path (default: stdout)")

    s = sub.add_parser("sweep", help="run a parameter sweep with repeats")
    s.add_argument("--config", required=True, help="config with a sweep section")
    s.add_argument("--seed", type=int, default=None, help="override base seed")
    s.add_argument("--out", default="runs/sweep")
    s.add_argument("--workers", type=int, default=1,
                   help=f"parallel runs (env {runner.WORKERS_ENV} overrides)")

    o = sub.add_parser("oracle", help="write reference data files")
    o.add_argument("--task", required=True, choices=runner.ORACLE_TASKS)
    o.add_argument("--out", default="runs/oracle")
    o.add_argument("--sigma", type=float, default=0.05)
    o.add_argument("--samples", type=int, default=10_000)
    o.add_argument("--seed", type=int, default=0)

    return p


def _load_config(path):
    try:
        return cfgmod.load(path)
    except FileNotFoundError:
        print(f"error: config file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)
    except cfgmod.ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def main(argv=None):
    args = build_parser().parse_args(argv)

    if args.command == "train":
        cfg = _load_config(args.config)
        try:
            _, metrics = runner.run_training(cfg, out_dir=args.out, seed=args.seed)
        except TrainingAbort as exc:
            print(f"error: training aborted: {exc}", file=sys.stderr)
            return EXIT_TRAINING
        print(f"wrote {args.out}/checkpoint.json  relative_error={metrics['relative_error']:.6g}")
        return EXIT_OK

    if args.command == "evaluate":
        cfg = _load_config(args.config)
        eval_seed = args.seed if args.seed is not None else runner.derived_seed(cfg.train.seed, 0xEA)
        try:
            metrics = runner.evaluate_checkpoint(args.checkpoint, cfg, eval_seed, out_path=args.out)
        except (ValueError, FileNotFoundError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if args.out is None:
            cfgmod.dump_json_17g(metrics, sys.stdout)
        else:
            print(f"wrote {args.out}")
        return EXIT_OK

    if args.command == "sweep":
        cfg = _load_config(args.config)
        if cfg.sweep is None:
            print("error: invalid config: missing sweep section", file=sys.stderr)
            return EXIT_CONFIG
        if args.seed is not None:
            cfg = replace(cfg, train=replace(cfg.train, seed=args.seed))
        workers = runner.resolve_workers(args.workers)
        done = {"n": 0}
        total = len(cfg.sweep.values) * cfg.repeat

        def progress(out):
            done["n"] += 1
            vi, rep, _, err = out
            status = "fail" if err else "ok"
            print(f"[{done['n']}/{total}] value={cfg.sweep.values[vi]} rep={rep} {status}", flush=True)

        summary = runner.run_sweep(cfg, workers=workers, out_dir=args.out, progress=progress)
        if "slope" in summary:
            print(f"slope({summary['key']}) = {summary['slope']['slope']:.4f}")
        return EXIT_OK

    if args.command == "oracle":
        try:
            runner.run_oracle(args.task, args.out, sigma=args.sigma, samples=args.samples, seed=args.seed)
        except OracleError as exc:
            print(f"error: oracle failed: {exc}", file=sys.stderr)
            return EXIT_ORACLE
        print(f"wrote {args.out}")
        return EXIT_OK

    raise AssertionError


if __name__ == "__main__":
    sys.exit(main())
