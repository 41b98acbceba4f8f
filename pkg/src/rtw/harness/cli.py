"""Command line: ``rtw train | eval | sweep | init-config``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from rtw.harness.config import METHODS, TASKS, ConfigError, ExperimentConfig, default_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def parse_seeds(text: str) -> list[int]:
    """``"0..4"`` (inclusive), ``"1,3,5"`` or a mix such as ``"0..2,7"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


def parse_methods(text: str) -> list[str]:
    methods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ValueError(f"methods must be drawn from {METHODS}, got {text!r}")
    return methods


def _cmd_init_config(args):
    cfg = default_config(args.task)
    text = cfg.to_json() + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_train(args):
    from rtw.harness.train import run_training

    cfg = ExperimentConfig.load(args.config)
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    for seed in seeds:
        run = run_training(cfg, seed, out_dir=args.output_dir)
        print(run)
    return EXIT_OK


def _cmd_eval(args):
    from rtw.harness.train import run_evaluation

    m = run_evaluation(args.checkpoint, task=args.task, n_trials=args.trials, seed=args.seed)
    print(json.dumps({"iteration": m.iteration, "trials": m.episodes, **m.metric_values()}, indent=2))
    return EXIT_OK


def _cmd_sweep(args):
    from rtw.harness.sweep import run_sweep

    cfg = ExperimentConfig.load(args.config)
    try:
        methods = parse_methods(args.methods)
        seeds = parse_seeds(args.seeds) if args.seeds else cfg.seeds
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    table = run_sweep(cfg, methods, seeds, args.output_dir)
    for method, entry in table["methods"].items():
        s = entry["aggregate"]["success_rate"]
        shown = "n/a" if s["mean"] is None else f"{s['mean']:.2f} +- {s['std']:.2f}"
        print(f"{method}: success {shown} ({entry['n_ok']}/{len(seeds)} runs ok)")
    failed = any(e["n_ok"] < len(seeds) for e in table["methods"].values())
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtw", description="Adaptive auxiliary reward weighting experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one run per seed")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--output-dir", help="overrides output_dir from the config")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint deterministically")
    e.add_argument("--checkpoint", required=True, help="checkpoint file, checkpoints dir or run dir")
    e.add_argument("--trials", type=int, default=30)
    e.add_argument("--task", choices=TASKS)
    e.add_argument("--seed", type=int, help="evaluation suite seed (default: the run's eval_seed)")
    e.set_defaults(func=_cmd_eval)

    s = sub.add_parser("sweep", help="train and evaluate a method x seed grid")
    s.add_argument("--config", required=True)
    s.add_argument("--methods", default="rtw,er,rr")
    s.add_argument("--seeds", help="e.g. 0..4 or 0,2,5 (default: seeds from the config)")
    s.add_argument("--output-dir")
    s.set_defaults(func=_cmd_sweep)

    i = sub.add_parser("init-config", help="print a full default config")
    i.add_argument("--task", required=True, choices=TASKS)
    i.add_argument("--output", "-o")
    i.set_defaults(func=_cmd_init_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime exit code
        logging.getLogger("rtw").exception("run failed")
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
