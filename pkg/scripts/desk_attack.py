"""Desk-scale audit over several master seeds.

Runs the configured experiment once per seed and prints the per-seed AUC of
every attack plus the mean, and how often L1-LRT >= VAR-LRT >= thresholding.

    python scripts/desk_attack.py --config configs/desk.ini --seeds 0-9 --out runs/desk
"""

import argparse
import json
from pathlib import Path

import numpy as np

from explainleak.harness.config import ExperimentConfig, load_config, with_overrides
from explainleak.harness.experiment import run_experiment


def parse_seeds(text):
    if "-" in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",")]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="INI config (defaults when omitted)")
    ap.add_argument("--seeds", default="0-9")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs/desk")
    args = ap.parse_args()

    base = load_config(args.config) if args.config else ExperimentConfig().validate()
    rows = {}
    for seed in parse_seeds(args.seeds):
        report = run_experiment(with_overrides(base, seed=seed), Path(args.out) / f"seed_{seed}", args.workers)
        d = report.to_dict()
        rows[seed] = {name: cell["auc"]["mean"] for name, cell in d["attacks"].items()}
        rows[seed]["test_acc"] = d["models"]["mean_test_accuracy"]
        print(f"seed {seed}: " + "  ".join(f"{k} {v:.3f}" for k, v in sorted(rows[seed].items())), flush=True)

    names = sorted(next(iter(rows.values())))
    print("mean:   " + "  ".join(f"{k} {np.mean([r[k] for r in rows.values()]):.3f}" for k in names))
    method = base.attack.methods[0].value
    keys = (f"l1_lrt/{method}", f"var_lrt/{method}", f"threshold/{method}")
    if all(k in names for k in keys):
        ok = [r[keys[0]] >= r[keys[1]] >= r[keys[2]] for r in rows.values()]
        print(f"L1-LRT >= VAR-LRT >= threshold in {sum(ok)}/{len(ok)} seeds")
    (Path(args.out) / "summary.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
