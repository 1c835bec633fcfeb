"""Command-line entry point: ``explainleak <verb> [options]``.

Exit codes: 0 success, 2 configuration error, 3 runtime stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

from ..evalkit import MetricSummary, format_metric
from .config import EPSILON_GRID, ConfigError, ExperimentConfig, load_config, with_overrides
from .data import save_csv
from .experiment import (
    StageError,
    epsilon_label,
    load_dataset,
    load_report,
    replay,
    run_attack,
    run_experiment,
    run_training,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("explainleak")


def _parse_epsilon(text: str) -> float:
    return math.inf if text.strip().lower() in ("inf", "infinity", "none") else float(text)


def _add_common(p: argparse.ArgumentParser, needs_config: bool = True) -> None:
    if needs_config:
        p.add_argument("--config", help="INI experiment config (defaults are used when omitted)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--epochs", type=int, help="training epochs override")
        p.add_argument("--n-shadow", type=int, dest="n_shadow", help="number of shadow models (N)")
        p.add_argument("--epsilon", type=_parse_epsilon, help="DP target epsilon ('inf' = non-private)")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="explainleak", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen-data", help="write the configured dataset as CSV")
    _add_common(p)
    p = sub.add_parser("train", help="train the N+1 target/shadow models")
    _add_common(p)
    p = sub.add_parser("attack", help="score and attack previously trained models")
    _add_common(p)
    p = sub.add_parser("run", help="train + attack in one go")
    _add_common(p)
    p = sub.add_parser("replay", help="recompute the report from persisted matrices")
    p.add_argument("--from", dest="src", help="directory holding the matrices (defaults to --out)")
    _add_common(p, needs_config=False)
    p = sub.add_parser("report", help="print the metrics table of a finished run")
    p.add_argument("--out", required=True, help="run directory (or dp-sweep directory)")
    p = sub.add_parser("dp-sweep", help="run the experiment for every epsilon in the grid")
    _add_common(p)
    p.add_argument("--grid", default=",".join(epsilon_label(e) for e in EPSILON_GRID),
                   help="comma-separated epsilons; 'inf' is the non-private arm")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
    return with_overrides(cfg, seed=args.seed, epochs=args.epochs, n_shadow=args.n_shadow, epsilon=args.epsilon)


def _table(report: dict) -> str:
    lines = [f"{'attack':<12} {'method':<7} {'TPR@0.001':>17} {'TPR@0.01':>17} {'AUC':>17}"]
    for cell in report["attacks"].values():
        vals = [format_metric(MetricSummary(cell[k]["mean"], cell[k]["std"]))
                for k in ("tpr_at_fpr_0.001", "tpr_at_fpr_0.01", "auc")]
        lines.append(f"{cell['attack']:<12} {cell['method']:<7} {vals[0]:>17} {vals[1]:>17} {vals[2]:>17}")
    m = report.get("models") or {}
    if m:
        tail = f"models: train acc {m['mean_train_accuracy']:.3f}, test acc {m['mean_test_accuracy']:.3f}"
        if m.get("private"):
            tail += f", sigma {m['noise_multiplier']:.3f}, eps {m['epsilon']:.3f}"
        lines.append(tail)
    return "\n".join(lines)


def _dp_sweep(cfg: ExperimentConfig, out: Path, grid: List[float], workers: int) -> dict:
    summary = {}
    for eps in grid:
        arm = with_overrides(cfg, epsilon=eps)
        report = run_experiment(arm, out / f"eps_{epsilon_label(eps)}", workers)
        d = report.to_dict()
        summary[epsilon_label(eps)] = {
            "models": d["models"],
            "attacks": {k: {m: v[m] for m in ("tpr_at_fpr_0.001", "tpr_at_fpr_0.01", "auc")}
                        for k, v in d["attacks"].items()},
        }
    (out / "sweep.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.verb == "report":
            out = Path(args.out)
            if (out / "sweep.json").exists():
                for eps, arm in json.loads((out / "sweep.json").read_text()).items():
                    print(f"== epsilon {eps}")
                    print(_table(load_report(out / f"eps_{eps}")))
            else:
                print(_table(load_report(out)))
            return EXIT_OK
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = Path(args.out)
        if args.verb == "replay":
            report = replay(args.src or out, out)
            print(_table(report.to_dict()))
            return EXIT_OK
        cfg = _config(args)
        if args.verb == "gen-data":
            out.mkdir(parents=True, exist_ok=True)
            save_csv(load_dataset(cfg), out / "data.csv", cfg.data.label_column)
        elif args.verb == "train":
            trained = run_training(cfg, out, args.workers)
            print(f"trained {len(trained.models)} models -> {out}")
        elif args.verb == "attack":
            print(_table(run_attack(cfg, out, args.workers).to_dict()))
        elif args.verb == "run":
            print(_table(run_experiment(cfg, out, args.workers).to_dict()))
        elif args.verb == "dp-sweep":
            grid = [_parse_epsilon(e) for e in args.grid.split(",") if e.strip()]
            out.mkdir(parents=True, exist_ok=True)
            for eps, arm in _dp_sweep(cfg, out, grid, args.workers).items():
                print(f"eps={eps}: " + ", ".join(f"{k} AUC {v['auc']['mean']:.3f}" for k, v in arm["attacks"].items()))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
