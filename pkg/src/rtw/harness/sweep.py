"""Train and evaluate every (method, seed) cell and tabulate mean +- std per method."""
from __future__ import annotations

import copy
import csv
import json
import logging
import traceback
from pathlib import Path

import numpy as np

from rtw.harness.config import ExperimentConfig
from rtw.harness.metrics import METRIC_FIELDS, fmt, mean_std
from rtw.harness.train import run_training

log = logging.getLogger(__name__)


def _read_csv(path):
    if not path.exists():
        return []
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _num(s):
    return float(s) if s not in (None, "") else None


def _curves(method, cells, k, out_dir):
    """Seed-averaged learning curves: eval success per eval iteration and training weights per iteration."""
    evals = {}
    weights = {}
    for cell in cells:
        if cell["status"] != "completed":
            continue
        run = Path(cell["run_dir"])
        for row in _read_csv(run / "eval.csv"):
            evals.setdefault(int(row["iter"]), []).append(_num(row["success_rate"]))
        for row in _read_csv(run / "weights.csv"):
            w = [_num(row[f"w_{i + 1}"]) for i in range(k)]
            weights.setdefault(int(row["iter"]), []).append(w + [_num(row["teacher_reward"])])
    path = out_dir / f"curves_{method}.csv"
    header = ["iter", "eval_success_mean", "eval_success_std", "n_seeds"]
    header += [f"w_{i + 1}_mean" for i in range(k)] + ["teacher_reward_mean"]
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for it in sorted(set(evals) | set(weights)):
            m, s = mean_std(evals.get(it, []))
            wrows = weights.get(it)
            if wrows:
                arr = np.array([[np.nan if v is None else v for v in r] for r in wrows], dtype=float)
                wmeans = [None if np.all(np.isnan(c)) else float(np.nanmean(c)) for c in arr.T]
            else:
                wmeans = [None] * (k + 1)
            n = len(evals.get(it, [])) or len(wrows or [])
            f.write(",".join(fmt(v) for v in [it, m, s, n, *wmeans]) + "\n")
    return path


def run_sweep(config: ExperimentConfig, methods, seeds, out_dir=None) -> dict:
    """Run the grid and write ``sweep.json``, ``sweep.csv`` and ``curves_<method>.csv``.

    Std is the population std (ddof=0) over seeds. A failing cell is recorded with its
    error and left out of the aggregate; the sweep carries on.
    """
    methods = list(methods)
    seeds = [int(s) for s in seeds]
    if not methods or not seeds:
        raise ValueError("a sweep needs at least one method and one seed")
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    table = {"task": config.task, "seeds": seeds, "std": "population", "methods": {}}
    for method in methods:
        cfg = copy.deepcopy(config)
        cfg.method = method
        cfg.seeds = seeds
        cfg.validate()
        cells = []
        for seed in seeds:
            cell = {"seed": seed}
            try:
                run = run_training(cfg, seed, out_dir=out)
                summary = json.loads((run / "summary.json").read_text())
                cell.update(status=summary["status"], run_dir=str(run), final=summary["final_eval"])
            except Exception as exc:  # noqa: BLE001 - any failure is recorded for the cell
                log.error("sweep cell %s seed %d failed: %s", method, seed, exc)
                cell.update(status="failed", error=f"{type(exc).__name__}: {exc}",
                            traceback=traceback.format_exc(), final=None)
            cells.append(cell)
        finals = [c["final"] for c in cells if c.get("final")]
        agg = {}
        for field in METRIC_FIELDS:
            m, s = mean_std([f.get(field) for f in finals])
            agg[field] = {"mean": m, "std": s}
        table["methods"][method] = {"cells": cells, "n_ok": len(finals), "aggregate": agg}
        if method != "mppi":
            _curves(method, cells, config.k, out)

    (out / "sweep.json").write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    with open(out / "sweep.csv", "w") as f:
        cols = ["method", "n_seeds", "n_ok"]
        for field in METRIC_FIELDS:
            cols += [f"{field}_mean", f"{field}_std"]
        f.write(",".join(cols) + "\n")
        for method, entry in table["methods"].items():
            vals = [method, len(seeds), entry["n_ok"]]
            for field in METRIC_FIELDS:
                vals += [entry["aggregate"][field]["mean"], entry["aggregate"][field]["std"]]
            f.write(",".join(v if isinstance(v, str) else fmt(v) for v in vals) + "\n")
    return table
